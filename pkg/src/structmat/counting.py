"""Global multiply-add counter.

Fast algorithms in this library report their arithmetic cost through this
counter so that complexity claims can be checked by measurement instead of
wall time.  Counts are multiply-add estimates incremented at the call sites
that do the actual work; they are deterministic for a given input size.
"""

_total = 0


def add(n):
    global _total
    _total += int(n)


def reset():
    global _total
    _total = 0


def total():
    return _total


class counted:
    """Context manager that reports the operations performed inside it."""

    def __enter__(self):
        self._start = _total
        return self

    def __exit__(self, *exc):
        self.ops = _total - self._start
        return False
