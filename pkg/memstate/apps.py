from django.apps import AppConfig


class MemstateConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'memstate'
    verbose_name = 'Memristor state characterization'
