from .app import cli, main
