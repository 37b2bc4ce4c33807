"""Console entry point."""
import sys

from app import init_app
from app.api.cli import cli_dispatch


def main() -> int:
    init_app(start_exporter=True)
    return cli_dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
