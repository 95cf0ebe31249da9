import unittest

# unittest.TestCase.enterContext was added in Python 3.11; provide the
# equivalent stdlib behaviour on older interpreters.
if not hasattr(unittest.TestCase, "enterContext"):
    def _enter_context(self, cm):
        cls = type(cm)
        enter = cls.__enter__
        exit = cls.__exit__
        result = enter(cm)
        self.addCleanup(exit, cm, None, None, None)
        return result

    unittest.TestCase.enterContext = _enter_context
