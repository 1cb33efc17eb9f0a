from __future__ import annotations
from io import StringIO
from typing import Union
import logging
import os

from .clparser import getCmdParser
from .executor import runCommand

logger = logging.getLogger(__name__)

SEED_VAR = 'DIFFKIT_SEED'


class Session():
    """
    This class is responsible for current session.
    It holds the default seed commands use when they are given no
    `--seed` of their own

    Args:
        seed (Union[int, None]): the default seed; read from the
            `DIFFKIT_SEED` environment variable when None, 0 if unset

    Attributes:
        seed (int): the default seed
        history (list[str]): the commands run so far

    Raises:
        SyntaxError: `DIFFKIT_SEED` is not an integer

    """

    def __init__(self, seed: Union[int, None] = None) -> None:
        self.seed: int
        self.history: list[str] = []

        if seed is None:
            value = os.environ.get(SEED_VAR, '0')
            try:
                seed = int(value)
            except ValueError:
                raise SyntaxError(
                    f'session: {SEED_VAR} must be an integer, '
                    f'but found {value}')
        self.seed = seed

    def getCmdResult(self, line: Union[str, list[str]]) -> StringIO:
        """
        Run command and return stream with the result

        Args:
            line (Union[str, list[str]]): the user entered command or
                its tokens

        Returns:
            StringIO: the stream with the result of cmd execution

        """

        cmd = getCmdParser(line)
        self.history.append(str(cmd))

        return runCommand(cmd, self.seed)

    def endSession(self) -> None:
        logger.debug('session: %d commands run', len(self.history))
        self.history.clear()
