from .test_cli import CmdTestCase
from io import StringIO
from unittest import mock
import os

from src.graph import ELEMENTWISE_DERIVS
from src.main import main
from src.session import Session


class ErrorTestCase(CmdTestCase):
    def assertErrorMsgEquals(self, line: list[str], expected: str,
                             exc: type = SyntaxError) -> None:
        with self.assertRaises(exc) as cm:
            self._execCommands(line)
        self.assertEqual(str(cm.exception), expected)

    def test_empty(self):
        with self.assertRaisesRegex(SyntaxError, '^usage: '):
            self._execCommands([''])

    def test_unknown_command(self):
        self.assertErrorMsgEquals(
            ['echo 42'],
            'echo: unknown command, choose from gradcheck, schedule, '
            'estimate, optimize, chain, ode')

    def test_unknown_key(self):
        self.assertErrorMsgEquals(
            ['schedule --K 4 --S 2 --foo 1'], 'schedule: --foo: Unknown key')

    def test_missing_value(self):
        self.assertErrorMsgEquals(
            ['schedule --K 4 --S'],
            'schedule: after "--S" a value must be, but found nothing')

    def test_stray_argument(self):
        self.assertErrorMsgEquals(
            ['chain theta.csv'], 'chain: unexpected argument theta.csv')

    def test_required(self):
        self.assertErrorMsgEquals(['schedule --K 4'],
                                  'schedule: --S is required')

    def test_not_integer(self):
        self.assertErrorMsgEquals(
            ['schedule --K four --S 2'],
            'schedule: --K must be an integer, but found four')

    def test_below_minimum(self):
        self.assertErrorMsgEquals(
            ['schedule --K 0 --S 2'],
            'schedule: --K must be at least 1, but found 0')
        self.assertErrorMsgEquals(
            ['estimate --estimator sfe --n 0'],
            'estimate: --n must be at least 1, but found 0')

    def test_not_number(self):
        self.assertErrorMsgEquals(
            ['gradcheck --graph g --tol small'],
            'gradcheck: --tol must be a number, but found small')

    def test_unknown_estimator(self):
        with self.assertRaisesRegex(SyntaxError,
                                    '^estimate: unknown estimator foo, '
                                    'choose from gumbel-argmax'):
            self._execCommands(['estimate --estimator foo'])

    def test_unknown_fixtures(self):
        with self.assertRaisesRegex(SyntaxError, 'unknown algorithm'):
            self._execCommands(['optimize --algo sgd --problem lasso'])
        with self.assertRaisesRegex(SyntaxError, 'unknown problem'):
            self._execCommands(['optimize --algo gd --problem rosenbrock'])
        with self.assertRaisesRegex(SyntaxError, 'unknown fixture'):
            self._execCommands(['ode --fixture lorenz'])
        with self.assertRaisesRegex(SyntaxError, 'unknown method'):
            self._execCommands(['ode --fixture linear --method magic'])

    def test_missing_file(self):
        with self.assertRaises(OSError):
            self._execCommands(['chain --theta UnknownFile'])

    def test_malformed_theta(self):
        p = self._getCorrectPath('/files/figure.graph')
        with self.assertRaisesRegex(ValueError, '^theta: '):
            self._execCommands([f'chain --theta {p}'])

    def test_bad_seed_variable(self):
        with mock.patch.dict(os.environ, {'DIFFKIT_SEED': 'abc'}):
            with self.assertRaisesRegex(SyntaxError, 'DIFFKIT_SEED'):
                Session()

    def test_seed_variable(self):
        with mock.patch.dict(os.environ, {'DIFFKIT_SEED': '42'}):
            self.assertEqual(Session().seed, 42)


class ExitCodeTestCase(CmdTestCase):
    def _run(self, argv: list[str]) -> tuple[int, str, str]:
        out, err = StringIO(), StringIO()
        with mock.patch('sys.stdout', out), mock.patch('sys.stderr', err):
            code = main(argv)
        return code, out.getvalue(), err.getvalue()

    def test_success(self):
        code, out, err = self._run(['schedule', '--K', '8', '--S', '1'])
        self.assertEqual(code, 0)
        self.assertIn('cost 28\n', out)
        self.assertEqual(err, '')

    def test_check_failed(self):
        graph = self._getCorrectPath('/files/figure.graph')

        def doubled(o, x, y):
            return o.scale(2.0, y)

        with mock.patch.dict(ELEMENTWISE_DERIVS, {'exp': doubled}):
            code, out, err = self._run(['gradcheck', '--graph', graph])
        self.assertEqual(code, 1)
        self.assertIn('FAIL', out)
        self.assertTrue(err.startswith('gradcheck: '))

    def test_usage(self):
        for argv in ([], ['schedule', '--K', '0', '--S', '1'],
                     ['estimate', '--estimator', 'sfe', '--n', '0'],
                     ['fly'], ['chain', '--theta', 'UnknownFile']):
            with self.subTest(argv=argv):
                code, out, err = self._run(argv)
                self.assertEqual(code, 2)
                self.assertEqual(out, '')
                self.assertNotEqual(err, '')

    def test_deterministic_bytes(self):
        argv = ['estimate', '--estimator', 'es-central', '--n', '300']
        self.assertEqual(self._run(argv)[1], self._run(argv)[1])
