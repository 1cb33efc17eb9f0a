from __future__ import annotations
import shlex
from typing import Union


class CmdIR:
    """
    Contains an intermediate representation of a command

    Args:
        argv (list[str]): the command name followed by `--flag value` pairs

    Attributes:
        name (str): the command name
        keys (dict[str, str]): flag name (without dashes) to its value,
            defaults filled in

    """

    # flag name -> default value; None marks a required flag
    defaults: dict[str, Union[str, None]] = {}

    def __init__(self, argv: list[str]) -> None:
        self.name: str
        self.keys: dict[str, str]

        self.name, self.keys = self.parseCmd(argv)

    def parseCmd(self, argv: list[str]) -> tuple[str, dict[str, str]]:
        """
        Split name and keys

        Args:
            argv (list[str]): the command tokens

        Returns:
            str: the command name
            dict[str, str]: the command keys and its value

        Raises:
            SyntaxError: unknown flag, flag without a value, a stray
                argument or a missing required flag

        """

        name, *tokens = argv
        keys: dict[str, str] = {}

        i = 0
        while i < len(tokens):
            tok = tokens[i]
            if not tok.startswith('--'):
                raise SyntaxError(f'{name}: unexpected argument {tok}')

            key = tok[2:]
            if key not in self.defaults:
                raise SyntaxError(f'{name}: {tok}: Unknown key')
            if i + 1 >= len(tokens):
                raise SyntaxError(
                    f'{name}: after "{tok}" a value must be, '
                    'but found nothing')

            keys[key] = tokens[i + 1]
            i += 2

        for key, default in self.defaults.items():
            if key in keys:
                continue
            if default is None:
                raise SyntaxError(f'{name}: --{key} is required')
            keys[key] = default

        return name, keys

    def intKey(self, key: str, minimum: int = 0) -> int:
        """
        A flag value as an integer

        Raises:
            SyntaxError: not an integer or below ``minimum``

        """

        value = self.keys[key]
        try:
            n = int(value)
        except ValueError:
            raise SyntaxError(
                f'{self.name}: --{key} must be an integer, but found {value}')
        if n < minimum:
            raise SyntaxError(
                f'{self.name}: --{key} must be at least {minimum}, '
                f'but found {n}')
        return n

    def floatKey(self, key: str) -> float:
        value = self.keys[key]
        try:
            return float(value)
        except ValueError:
            raise SyntaxError(
                f'{self.name}: --{key} must be a number, but found {value}')

    def __str__(self) -> str:
        kpp = ' '.join(f'--{k} {v}' for k, v in self.keys.items())
        return f'{self.name} {kpp}'.rstrip()

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, CmdIR):
            return False

        return self.name == o.name and self.keys == o.keys


class GradcheckIR(CmdIR):
    """
    `gradcheck --graph FILE [--tol t] [--seed n]`

    """

    defaults = {'graph': None, 'tol': '1e-6', 'seed': ''}


class ScheduleIR(CmdIR):
    """
    `schedule --K k --S s`

    """

    defaults = {'K': None, 'S': None}


class EstimateIR(CmdIR):
    """
    `estimate --estimator TAG [--n n] [--seed n]`

    """

    defaults = {'estimator': None, 'n': '10000', 'seed': ''}


class OptimizeIR(CmdIR):
    """
    `optimize --algo ALGO --problem NAME [--iters n]`

    """

    defaults = {'algo': None, 'problem': None, 'iters': '100'}


class ChainIR(CmdIR):
    """
    `chain --theta FILE`

    """

    defaults = {'theta': None}


class OdeIR(CmdIR):
    """
    `ode --fixture NAME [--K k] [--method strategy] [--S slots]`

    """

    defaults = {'fixture': None, 'K': '1000', 'method': 'full_cache',
                'S': '4'}


COMMANDS: dict[str, type] = {
    'gradcheck': GradcheckIR,
    'schedule': ScheduleIR,
    'estimate': EstimateIR,
    'optimize': OptimizeIR,
    'chain': ChainIR,
    'ode': OdeIR,
}


def splitLine(line: Union[str, list[str]]) -> list[str]:
    """
    Tokenize a command line the way a shell would

    """

    if isinstance(line, str):
        try:
            return shlex.split(line)
        except ValueError as e:
            raise SyntaxError(f'parse: {e}')
    return list(line)


def getCmdParser(line: Union[str, list[str]]) -> CmdIR:
    """
    Parse the command with its own representation

    Args:
        line (Union[str, list[str]]): the command line or its tokens

    Returns:
        CmdIR: the parsed command

    Raises:
        SyntaxError: empty line or unknown command

    """

    argv = splitLine(line)
    if not argv:
        raise SyntaxError(
            'usage: <command> [--flag value]..., '
            f'commands: {", ".join(COMMANDS)}')

    name = argv[0]
    if name not in COMMANDS:
        raise SyntaxError(
            f'{name}: unknown command, choose from {", ".join(COMMANDS)}')

    return COMMANDS[name](argv)
