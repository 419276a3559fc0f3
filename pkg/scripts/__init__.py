import shlex
import subprocess
import sys
import time

from rich.console import Console


class CommandProcessor:
    """Runs named shell steps in order, stopping at the first failure."""

    def __init__(self, commands: dict[str, str], rollback: dict[str, str] | None = None) -> None:
        self.commands = commands
        self.rollback = rollback or {}
        self.console = Console()

    def run(self) -> None:
        started = time.monotonic()
        for name, command in self.commands.items():
            result = self.execute_command(name, command)
            if result.returncode:
                self.report_failure(name, command, result)
                self.run_rollback()
                sys.exit(result.returncode)
            self.print_output(result.stdout)
        self.console.print(f"\n[bold green]done[/] in {time.monotonic() - started:.1f}s")

    def run_rollback(self) -> None:
        if not self.rollback:
            return
        self.console.print("[bold yellow]Rolling back:[/]")
        for name, command in self.rollback.items():
            result = self.execute_command(name, command)
            if result.returncode:
                self.console.print(f"[red]rollback step '{name}' failed too[/]")

    def report_failure(
        self, name: str, command: str, result: subprocess.CompletedProcess[bytes]
    ) -> None:
        output = (result.stdout + result.stderr).decode().strip()
        self.console.print(
            f'\n[bold red]Error[/] in step [bold blue]"{name}"[/] '
            f"([bold yellow]{command}[/]), exit status {result.returncode}:\n"
        )
        self.console.print(output, style="red", markup=False, highlight=False)

    def print_output(self, stdout: bytes) -> None:
        output = stdout.decode().strip()
        if output:
            self.console.print(output, markup=False, highlight=False)

    def execute_command(self, name: str, command: str) -> subprocess.CompletedProcess[bytes]:
        self.console.print(f"\n[bold blue]{name.lower()}:[/] [yellow]{command}[/]")
        started = time.monotonic()
        result = subprocess.run(shlex.split(command), capture_output=True)
        self.console.print(f"[dim]{time.monotonic() - started:.1f}s[/]")
        return result
