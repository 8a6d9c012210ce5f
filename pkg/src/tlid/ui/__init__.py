from .theme import TLID_THEME, get_console, reset_console
from .console import TlidConsole, print_section, print_divider

__all__ = ["TLID_THEME", "get_console", "reset_console", "TlidConsole", "print_section", "print_divider"]
