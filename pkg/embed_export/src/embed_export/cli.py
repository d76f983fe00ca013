"""Command line: run an export manifest.

Exit codes: 0 success, 1 usage error, 2 manifest/data error, 4 finished but
some media were skipped as unreadable.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export
from .manifest import ExportManifest


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-export", description=__doc__)
    parser.add_argument("--manifest", required=True,
                        help="export manifest JSON")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        manifest = ExportManifest.load(args.manifest)
        result = export(manifest)
    except ExportError as e:
        print(f"export error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    for modality, path in sorted(result.written.items()):
        print(f"wrote {modality} table to {path}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} unreadable media files:",
              file=sys.stderr)
        for line in result.skipped:
            print(f"  {line}", file=sys.stderr)
        return 4
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
