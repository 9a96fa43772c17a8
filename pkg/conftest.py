"""Configure Django for pytest using the bundled test project settings."""
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / 'tests'))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'testlossbudget.settings')

import django  # noqa: E402

django.setup()
