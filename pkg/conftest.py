import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Spillover.settings')
django.setup()
