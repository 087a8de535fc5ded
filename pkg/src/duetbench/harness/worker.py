"""Standalone executable running a builtin artificial workload under the wire protocol.

Usage: ``python -m duetbench.harness.worker KIND OPERATION_COUNT``
"""
import sys

from .. import workloads
from .protocol import serve


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m duetbench.harness.worker KIND OPERATION_COUNT", file=sys.stderr)
        return 2
    kind, count = argv[0], int(argv[1])
    workloads.prepare(kind)
    return serve(lambda: workloads.execute(kind, count))


if __name__ == "__main__":
    sys.exit(main())
