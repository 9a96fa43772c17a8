from django.apps import AppConfig


class LossbudgetConfig(AppConfig):
    name = 'lossbudget'
    verbose_name = 'Loss budget'
