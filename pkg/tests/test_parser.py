import unittest

from src.clparser import CmdIR, EstimateIR, ScheduleIR, getCmdParser
from src.clparser import splitLine


class SplitTestCase(unittest.TestCase):
    def test_simple(self):
        self.assertEqual(splitLine('schedule --K 8 --S 1'),
                         ['schedule', '--K', '8', '--S', '1'])

    def test_quotes(self):
        self.assertEqual(splitLine('chain --theta "my dir/theta.csv"'),
                         ['chain', '--theta', 'my dir/theta.csv'])

    def test_tokens_pass_through(self):
        argv = ['ode', '--fixture', 'linear']
        self.assertEqual(splitLine(argv), argv)
        self.assertIsNot(splitLine(argv), argv)

    def test_unclosed_quote(self):
        with self.assertRaisesRegex(SyntaxError, '^parse: '):
            splitLine('chain --theta "theta.csv')


class CmdTestCase(unittest.TestCase):
    def assertCmdEqual(self, line: str, name: str,
                       keys: dict[str, str]) -> None:
        cmd: CmdIR = getCmdParser(line)

        self.assertEqual(cmd.name, name)
        self.assertEqual(cmd.keys, keys)

    def test_required_only(self):
        self.assertCmdEqual('schedule --K 8 --S 1', 'schedule',
                            {'K': '8', 'S': '1'})

    def test_defaults(self):
        self.assertCmdEqual('estimate --estimator sfe', 'estimate',
                            {'estimator': 'sfe', 'n': '10000', 'seed': ''})
        self.assertCmdEqual('ode --fixture zero', 'ode',
                            {'fixture': 'zero', 'K': '1000',
                             'method': 'full_cache', 'S': '4'})

    def test_override_default(self):
        self.assertCmdEqual('optimize --iters 5 --algo gd --problem lasso',
                            'optimize',
                            {'algo': 'gd', 'problem': 'lasso', 'iters': '5'})

    def test_last_flag_wins(self):
        self.assertCmdEqual('chain --theta a.csv --theta b.csv', 'chain',
                            {'theta': 'b.csv'})

    def test_ir_class(self):
        self.assertIsInstance(getCmdParser('schedule --K 1 --S 1'),
                              ScheduleIR)
        self.assertIsInstance(getCmdParser(['estimate', '--estimator', 'x']),
                              EstimateIR)

    def test_str(self):
        cmd = getCmdParser('schedule --S 2 --K 4')
        self.assertEqual(str(cmd), 'schedule --S 2 --K 4')
        self.assertEqual(str(getCmdParser('gradcheck --graph g')),
                         'gradcheck --graph g --tol 1e-6 --seed')

    def test_eq(self):
        self.assertEqual(getCmdParser('schedule --K 4 --S 2'),
                         getCmdParser(['schedule', '--S', '2', '--K', '4']))
        self.assertNotEqual(getCmdParser('schedule --K 4 --S 2'),
                            getCmdParser('schedule --K 4 --S 3'))
        self.assertNotEqual(getCmdParser('schedule --K 4 --S 2'), 'schedule')


class KeyValueTestCase(unittest.TestCase):
    def test_int(self):
        cmd = getCmdParser('schedule --K 12 --S 3')
        self.assertEqual(cmd.intKey('K', minimum=1), 12)

    def test_float(self):
        cmd = getCmdParser('gradcheck --graph g --tol 1e-3')
        self.assertEqual(cmd.floatKey('tol'), 1e-3)


if __name__ == '__main__':
    unittest.main()
