import click

from scripts import CommandProcessor


@click.command()
@click.argument("directory", default="build/corpus")
def main(directory: str) -> None:
    """
    Materialize the benchmark corpus and run it.

    \b
    Examples:
        poetry run python -m scripts.bench
        poetry run python -m scripts.bench /tmp/corpus
    """
    commands = {
        "writing the corpus": f"poetry run fixql corpus-list -o {directory}",
        "running the benchmark": f"poetry run fixql bench {directory} --format json",
    }
    command_processor = CommandProcessor(commands, {"removing the corpus": f"rm -rf {directory}"})
    command_processor.run()


if __name__ == "__main__":
    main()
