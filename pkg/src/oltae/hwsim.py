"""Transaction-level emulator of the attitude-solver logic core.

The processing-system side loads a :class:`RegisterFile`, asserts ``start``
and polls for ``done``; the core walks IDLE -> COMPUTE -> DONE and publishes
the raw Q15.16 result ``q'``.  Arithmetic follows the contract documented in
:mod:`oltae.fixedpoint` but is implemented separately here, with explicit MAC
units and a cycle-stepped 3x3 systolic array, so the two paths can be checked
against each other.

Register layout (word offsets)::

    input   0            n, number of correspondences (plain integer)
            1 + 7*j + 0..2   s'_j  (Q15.16)
            1 + 7*j + 3..5   y'_j  (Q15.16)
            1 + 7*j + 6      w_j   (Q15.16, normalised weight)
    output  0..2         q'    (Q15.16)
            3            status word: bit0 done, bit1 divide_error, bit2 saturation
"""

import enum
import warnings
from dataclasses import dataclass

from .errors import DivideByZero, ProtocolViolation, TooFewCorrespondences
from .fixedpoint import (ACC_MAX, ACC_MIN, FRAC_BITS, RAW_MAX, RAW_MIN, FxStatus,
                         IllConditionedWarning, prepare_inputs)

WORDS_PER_TERM = 7
STATUS_DONE = 1 << 0
STATUS_DIVIDE_ERROR = 1 << 1
STATUS_SATURATION = 1 << 2

C_MAC = 1
C_DIV = 20
C_OVERHEAD = 8


class State(enum.Enum):
    IDLE = "IDLE"
    COMPUTE = "COMPUTE"
    DONE = "DONE"


@dataclass(frozen=True)
class CoreState:
    state: State = State.IDLE
    start: int = 0
    done: int = 0
    reset: int = 0


def step_state(current, start=0, reset=0, complete=0):
    """Pure transition function of the three-state control machine.

    IDLE -start-> COMPUTE -complete-> DONE -reset-> IDLE.  Any other signal
    combination holds the current state.
    """
    state = current.state
    if state is State.IDLE and start:
        state = State.COMPUTE
    elif state is State.COMPUTE and complete:
        state = State.DONE
    elif state is State.DONE and reset:
        state = State.IDLE
    return CoreState(state=state, start=int(bool(start)), done=int(state is State.DONE),
                     reset=int(bool(reset)))


# -- datapath ----------------------------------------------------------------

class _Counters:
    def __init__(self):
        self.mac_ops = 0
        self.divides = 0
        self.saturations = 0


class MacUnit:
    """Multiplier feeding a 64-bit accumulator; rounds once on :meth:`flush`."""

    def __init__(self, counters):
        self.counters = counters
        self.acc = 0

    def mac(self, a, b):
        self.counters.mac_ops += 1
        self._add(a * b)

    def msub(self, a, b):
        self.counters.mac_ops += 1
        self._add(-(a * b))

    def add_wide(self, a, b):
        # accumulate a weighted term across the n-term stream
        self.counters.mac_ops += 1
        self._add(a * b)

    def _add(self, p):
        acc = self.acc + p
        if acc > ACC_MAX:
            acc = ACC_MAX
            self.counters.saturations += 1
        elif acc < ACC_MIN:
            acc = ACC_MIN
            self.counters.saturations += 1
        self.acc = acc

    def flush(self, negate=False):
        acc = -self.acc if negate else self.acc
        self.acc = 0
        half = 1 << (FRAC_BITS - 1)
        mag = (abs(acc) + half) >> FRAC_BITS
        out = mag if acc >= 0 else -mag
        if out > RAW_MAX:
            self.counters.saturations += 1
            return RAW_MAX
        if out < RAW_MIN:
            self.counters.saturations += 1
            return RAW_MIN
        return out


class Divider:
    """Integer divider: ``(num << 16) / den`` truncated toward zero."""

    def __init__(self, counters):
        self.counters = counters

    def divide(self, num, den):
        self.counters.divides += 1
        if den == 0:
            raise DivideByZero("divider: denominator is zero")
        neg = (num < 0) ^ (den < 0)
        q = (abs(num) << FRAC_BITS) // abs(den)
        q = -q if neg else q
        if q > RAW_MAX or q < RAW_MIN:
            self.counters.saturations += 1
            return RAW_MAX if q > RAW_MAX else RAW_MIN
        return q


class SystolicArray3:
    """Output-stationary 3x3 grid of processing elements.

    Row ``i`` of ``A`` enters from the west delayed by ``i`` cycles and column
    ``j`` of ``B`` enters from the north delayed by ``j`` cycles, so PE(i, j)
    sees ``A[i][k]`` and ``B[k][j]`` together at cycle ``i + j + k``.
    """

    SIZE = 3

    def __init__(self, counters):
        self.counters = counters
        self.pes = [[MacUnit(counters) for _ in range(3)] for _ in range(3)]
        self.cycles = 0

    def multiply(self, a, b):
        n = self.SIZE
        a_reg = [[None] * n for _ in range(n)]
        b_reg = [[None] * n for _ in range(n)]
        total = 3 * n - 2
        for t in range(total):
            # values move one PE east / south per cycle
            new_a = [[None] * n for _ in range(n)]
            new_b = [[None] * n for _ in range(n)]
            for i in range(n):
                for j in range(n):
                    if j == 0:
                        k = t - i
                        new_a[i][j] = a[i][k] if 0 <= k < n else None
                    else:
                        new_a[i][j] = a_reg[i][j - 1]
                    if i == 0:
                        k = t - j
                        new_b[i][j] = b[k][j] if 0 <= k < n else None
                    else:
                        new_b[i][j] = b_reg[i - 1][j]
            a_reg, b_reg = new_a, new_b
            for i in range(n):
                for j in range(n):
                    if a_reg[i][j] is not None and b_reg[i][j] is not None:
                        self.pes[i][j].mac(a_reg[i][j], b_reg[i][j])
            self.cycles += 1
        return [[self.pes[i][j].flush() for j in range(n)] for i in range(n)]


def systolic_matmul3(a, b, status=None):
    """Raw 3x3 product through the systolic array."""
    counters = _Counters()
    out = SystolicArray3(counters).multiply(a, b)
    if status is not None:
        status.saturation_count += counters.saturations
    return out


def _minor_sign(i, k):
    rows = [r for r in range(3) if r != i]
    cols = [c for c in range(3) if c != k]
    return rows, cols, (-1) ** (i + k)


def _cramer(a, counters, divider):
    mac = MacUnit(counters)
    cof = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for k in range(3):
            (r0, r1), (c0, c1), sign = _minor_sign(i, k)
            if sign > 0:
                mac.mac(a[r0][c0], a[r1][c1])
                mac.msub(a[r0][c1], a[r1][c0])
            else:
                mac.msub(a[r0][c0], a[r1][c1])
                mac.mac(a[r0][c1], a[r1][c0])
            cof[i][k] = mac.flush()
    for k in range(3):
        mac.mac(a[0][k], cof[0][k])
    det = mac.flush()
    if det == 0:
        raise DivideByZero("Cramer inversion: determinant is zero")
    return [[divider.divide(cof[k][i], det) for k in range(3)] for i in range(3)], det


def cramer_inverse3(a, status=None):
    """Raw 3x3 inverse via cofactors and the divider."""
    counters = _Counters()
    inv, det = _cramer(a, counters, Divider(counters))
    scale = max(abs(x) for row in a for x in row) / (1 << FRAC_BITS)
    if abs(det) / (1 << FRAC_BITS) < 2.0 ** -8 * scale ** 3:
        warnings.warn(f"ill-conditioned matrix (det={det / (1 << FRAC_BITS):.3g})",
                      IllConditionedWarning, stacklevel=2)
    if status is not None:
        status.saturation_count += counters.saturations
    return inv


# -- register file and core --------------------------------------------------

@dataclass
class CycleReport:
    mac_ops: int = 0
    divides: int = 0
    modeled_cycles: int = 0


class RegisterFile:
    """Software-accessible input/output words, with an optional transaction log."""

    def __init__(self, words=None):
        self.inputs = list(words or [])
        self.outputs = [0, 0, 0, 0]
        self.trace = []

    @classmethod
    def from_stream(cls, s, y, w):
        words = [len(w)]
        for sj, yj, wj in zip(s, y, w):
            words.extend(sj)
            words.extend(yj)
            words.append(wj)
        return cls(words)

    @classmethod
    def from_deltas(cls, deltas, scales, status=None):
        return cls.from_stream(*prepare_inputs(deltas, scales, status))

    def log(self, op, bank, offset, value):
        self.trace.append(f"{op} {bank} {offset:04d} 0x{value & 0xFFFFFFFF:08X}")

    def decode(self):
        n = self.inputs[0]
        if len(self.inputs) != 1 + WORDS_PER_TERM * n:
            raise ProtocolViolation(
                f"register file holds {len(self.inputs)} words, expected {1 + WORDS_PER_TERM * n}")
        s, y, w = [], [], []
        for j in range(n):
            base = 1 + WORDS_PER_TERM * j
            s.append(self.inputs[base:base + 3])
            y.append(self.inputs[base + 3:base + 6])
            w.append(self.inputs[base + 6])
        return s, y, w


class OltaeCore:
    """One emulated core instance; single owner, not thread-safe."""

    def __init__(self, registers=None, c_mac=C_MAC, c_div=C_DIV, overhead=C_OVERHEAD):
        self.registers = registers if registers is not None else RegisterFile()
        self.state = CoreState()
        self.c_mac = c_mac
        self.c_div = c_div
        self.overhead = overhead
        self.report = CycleReport()

    def _signal(self, **signals):
        before = self.state.state
        self.state = step_state(self.state, **signals)
        if self.state.state is not before:
            self.registers.trace.append(f"S {before.value} -> {self.state.state.value}")

    def write_input(self, offset, value):
        if self.state.state is not State.IDLE:
            raise ProtocolViolation(f"input write while {self.state.state.value}")
        regs = self.registers
        if offset >= len(regs.inputs):
            regs.inputs.extend([0] * (offset + 1 - len(regs.inputs)))
        regs.inputs[offset] = value
        regs.log("W", "in", offset, value)

    def load(self, words):
        for offset, value in enumerate(words):
            self.write_input(offset, value)

    def assert_start(self):
        if self.state.state is not State.IDLE:
            raise ProtocolViolation(f"start asserted while {self.state.state.value}")
        self._signal(start=1)
        self._compute()

    def read_output(self, offset):
        if self.state.state is not State.DONE:
            raise ProtocolViolation(f"output read while {self.state.state.value}")
        value = self.registers.outputs[offset]
        self.registers.log("R", "out", offset, value)
        return value

    def reset(self):
        self._signal(reset=1)

    @property
    def done(self):
        return self.state.done

    def _compute(self):
        counters = _Counters()
        status = 0
        q = [0, 0, 0]
        try:
            s, y, w = self.registers.decode()
            q = self._datapath(s, y, w, counters)
        except DivideByZero:
            status |= STATUS_DIVIDE_ERROR
            q = [0, 0, 0]
        if counters.saturations:
            status |= STATUS_SATURATION
        self.registers.outputs = list(q) + [status | STATUS_DONE]
        self.report = CycleReport(
            mac_ops=counters.mac_ops,
            divides=counters.divides,
            modeled_cycles=counters.mac_ops * self.c_mac + counters.divides * self.c_div
            + self.overhead,
        )
        self.saturations = counters.saturations
        self._signal(complete=1)

    @staticmethod
    def _datapath(s, y, w, counters):
        normal_acc = [[MacUnit(counters) for _ in range(3)] for _ in range(3)]
        rhs_acc = [MacUnit(counters) for _ in range(3)]
        term = MacUnit(counters)
        for sj, yj, wj in zip(s, y, w):
            # inner and outer products of s'_j
            for i in range(3):
                for k in range(3):
                    if i == k:
                        for c in range(3):
                            term.mac(sj[c], sj[c])
                    term.msub(sj[i], sj[k])
                    normal_acc[i][k].add_wide(wj, term.flush())
            # cross product s'_j x y'_j
            for i in range(3):
                a, b = (i + 1) % 3, (i + 2) % 3
                term.mac(sj[a], yj[b])
                term.msub(sj[b], yj[a])
                rhs_acc[i].add_wide(wj, term.flush())
        normal = [[normal_acc[i][k].flush() for k in range(3)] for i in range(3)]
        rhs = [rhs_acc[i].flush(negate=True) for i in range(3)]
        inv, _ = _cramer(normal, counters, Divider(counters))
        # matrix-vector product on the systolic grid, r in column 0
        rhs_mat = [[rhs[k], 0, 0] for k in range(3)]
        prod = SystolicArray3(counters).multiply(inv, rhs_mat)
        return [prod[i][0] for i in range(3)]


def core_run(registers, c_mac=C_MAC, c_div=C_DIV, overhead=C_OVERHEAD):
    """Drive one full IDLE -> COMPUTE -> DONE -> IDLE transaction.

    Returns ``(q_prime_raw, report, status_word)``.  The register file's
    ``trace`` receives every transaction.
    """
    words = list(registers.inputs)
    if not words or words[0] < 3:
        raise TooFewCorrespondences(words[0] if words else 0)
    core = OltaeCore(RegisterFile(), c_mac=c_mac, c_div=c_div, overhead=overhead)
    core.registers.trace = registers.trace
    core.load(words)
    core.assert_start()
    q = tuple(core.read_output(i) for i in range(3))
    status = core.read_output(3)
    core.reset()
    registers.outputs = list(core.registers.outputs)
    return q, core.report, status


def hw_estimate_attitude(deltas, scales):
    """Host-side wrapper: quantise, run the core, rescale.

    Returns ``(q_hat, q_prime_raw, status_word, report, saturations)`` where
    ``saturations`` counts input-quantisation and datapath events together.
    Raises DivideByZero when the core reports a divide error.
    """
    fx = FxStatus()
    regs = RegisterFile.from_deltas(deltas, scales, fx)
    q, report, status = core_run(regs)
    if status & STATUS_DIVIDE_ERROR:
        raise DivideByZero("core reported a divide error")
    q_hat = [scales.alpha / scales.beta * (v / (1 << FRAC_BITS)) for v in q]
    sat = fx.saturation_count + (1 if status & STATUS_SATURATION else 0)
    return q_hat, q, status, report, sat
