import logging

import numpy as np

from elevatorcodes.codes import css_commutes, is_matchable, min_distance_bruteforce

logger = logging.getLogger(__name__)


class Context:
    def __init__(self, checker, newcontext):
        self.checker = checker
        self.newcontext = newcontext

    def __enter__(self):
        self.checker.context.append(self.newcontext)

    def __exit__(self, type, value, traceback):
        self.checker.context.pop()


class CodeChecker:
    """Structural checks on a combined code and its outer code.

    Every failed check is logged with its context; ``check()`` returns
    whether all of them passed.
    """

    def __init__(self, code, bruteforce=True):
        self.context = []
        self.okay = True
        self.code = code
        self.bruteforce = bruteforce

    def check(self):
        code = self.code
        with Context(self, f"code {code.name}"):
            self.ensure(css_commutes(code), "X and Z checks commute")
            with Context(self, "logical operators"):
                self.check_logicals()
            if code.outer is not None:
                with Context(self, f"outer code {code.outer.name}"):
                    self.check_outer(code.outer)
        return self.okay

    def check_logicals(self):
        code = self.code
        self.ensure_equal(code.logical_x.rows, code.logical_z.rows, "logical count")
        self.ensure(
            (code.h_x @ code.logical_x.T).is_zero(),
            "logical X commutes with Z-type checks",
        )
        self.ensure(
            (code.h_z @ code.logical_z.T).is_zero(),
            "logical Z commutes with X-type checks",
        )
        pairing = (code.logical_x @ code.logical_z.T).to_dense()
        self.ensure(
            np.array_equal(pairing, np.eye(code.k, dtype=np.uint8)),
            "logical X and Z pair symplectically",
        )

    def check_outer(self, outer):
        basis = outer.codeword_basis
        self.ensure_equal(basis.rows, outer.k, "number of codeword basis vectors")
        if basis.rows:
            self.ensure(
                (outer.check_matrix @ basis.T).is_zero(),
                "codeword basis satisfies every check",
            )
        if not is_matchable(outer):
            logger.warning(
                "Outer code %s has a column of weight > 2; decoding is not "
                "matching-friendly",
                outer.name,
            )
        if self.bruteforce and outer.claimed_distance is not None and outer.k:
            self.ensure_equal(
                min_distance_bruteforce(outer), outer.claimed_distance, "distance"
            )

    def ensure(self, condition, what):
        context = ", ".join(self.context)
        if condition:
            logger.debug(f"Check passed: {what} in {context}")
            return True
        logger.error(f"Check failed: {what} in {context}")
        self.okay = False
        return False

    def ensure_equal(self, value, expected, what):
        context = ", ".join(self.context)
        if value == expected:
            logger.debug(f"Code had expected {what} in {context}")
            return True
        report = f"\nCode had differing {what} in {context}:\n"
        report += f" * expected: {expected}\n * found: {value}\n"
        logger.error(report)
        self.okay = False
        return False
