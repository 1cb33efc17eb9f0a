from __future__ import annotations
from typing import Optional
import logging
import os
import sys

from .errors import CheckFailedError
from .session import Session

LOGLEVEL_VAR = 'DIFFKIT_LOGLEVEL'


def main(argv: Optional[list[str]] = None) -> int:
    """
    Run one command and return the exit code:
    0 on success, 1 when a check failed or a computation broke down,
    2 on a usage error

    """

    level = os.environ.get(LOGLEVEL_VAR, 'WARNING').upper()
    if not isinstance(logging.getLevelName(level), int):
        level = 'WARNING'
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format='%(levelname)s %(name)s: %(message)s')

    argv = sys.argv[1:] if argv is None else argv

    try:
        session = Session()
        ostr = session.getCmdResult(argv)

    except CheckFailedError as e:
        print(e.output, end='')
        print(str(e), file=sys.stderr)
        return 1

    except (SyntaxError, OSError, ValueError) as e:
        print(str(e), file=sys.stderr)
        return 2

    except Exception as e:
        print(str(e), file=sys.stderr)
        return 1

    print(ostr.getvalue(), end='')
    ostr.close()
    session.endSession()

    return 0


if __name__ == '__main__':
    sys.exit(main())
