"""ramseyrecoil package."""

__app_name__ = "ramseyrecoil"
__version__ = "0.1.0"
