"""Per-invocation instrumentation counters.

A counter is created by the caller, threaded through one call, and read
afterwards; counters are never shared between concurrent runs.
"""


class FlopCounter:
    """Tallies the multiply-add work a routine actually executes.

    ``madds`` counts scalar multiplications (an addition fused with the same
    product is not counted twice).  ``aux_peak`` is the largest number of
    simultaneously live auxiliary doubles the instrumented routine reported.
    ``level_passes`` counts inter-chunk sweeps.
    """

    __slots__ = ("madds", "aux_peak", "level_passes")

    def __init__(self) -> None:
        self.madds = 0
        self.aux_peak = 0
        self.level_passes = 0

    def add(self, n: int) -> None:
        self.madds += int(n)

    def note_aux(self, doubles: int) -> None:
        if doubles > self.aux_peak:
            self.aux_peak = int(doubles)

    def count_pass(self) -> None:
        self.level_passes += 1
