from typing import Any, Dict, Iterable, Optional, Sequence

from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from .theme import get_console

DIVIDER = "[secondary]─────────────────────────────────────────[/secondary]"


def print_divider() -> None:
    get_console().print(DIVIDER)


def print_section(title: str) -> None:
    console = get_console()
    console.print()
    console.print(f"[primary]{title}[/primary]")
    console.print(DIVIDER)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


class TlidConsole:
    """Human-facing output on stderr."""

    def __init__(self):
        self.console = get_console()

    def print_success(self, text: str) -> None:
        self.console.print(f"[success]✓ {text}[/success]")

    def print_error(self, text: str) -> None:
        self.console.print(f"[notice]✗ {text}[/notice]")

    def print_info(self, text: str) -> None:
        self.console.print(f"[info]ℹ {text}[/info]")

    def print_warning(self, text: str) -> None:
        self.console.print(f"[notice]⚠ {text}[/notice]")

    def show_table(self, title: Optional[str], columns: Sequence[str], rows: Iterable[Sequence[Any]],
                   highlight: Optional[str] = None) -> None:
        table = Table(
            title=f"[primary]{title}[/primary]" if title else None,
            border_style="secondary",
            header_style="table.header",
        )
        for i, name in enumerate(columns):
            table.add_column(name, style="primary" if i == 0 else "text")

        for row in rows:
            cells = [_cell(v) for v in row]
            if highlight and highlight in cells:
                cells = [f"[notice]{c}[/notice]" for c in cells]
            table.add_row(*cells)

        self.console.print()
        self.console.print(table)

    def show_summary(self, title: str, values: Dict[str, Any]) -> None:
        print_section(title)
        table = Table(border_style="secondary", header_style="table.header", show_header=False)
        table.add_column("key", style="info")
        table.add_column("value", style="text")
        for key, value in values.items():
            table.add_row(key, _cell(value))
        self.console.print(table)
        print_divider()

    def show_progress(self) -> Progress:
        return Progress(
            SpinnerColumn(style="info"),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(complete_style="primary", finished_style="success"),
            TaskProgressColumn(),
            console=self.console,
            transient=True,
        )
