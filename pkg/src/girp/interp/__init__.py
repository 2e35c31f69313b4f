"""Reference interpreter for the bounded SPIR-V compute subset.

Deterministic (sequential, fixed invocation order), CI-runnable without a GPU,
and the brute-force oracle any real-GPU backend is checked against. The inner
dispatch loop is compiled (Cython) when the extension is available; otherwise
the pure-Python kernel with identical semantics is selected at import.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import LimitExceeded, MissingBinding
from ..reflect import ModuleInfo, SpirvModule, reflect
from . import pykernel
from .program import ComplianceReport, Program, check_subset, lower

try:
    from . import _kernel  # type: ignore[attr-defined]

    ACCELERATED = True
    _default_kernel = _kernel
except ImportError:  # extension not built; pure-Python fallback
    ACCELERATED = False
    _default_kernel = pykernel

KERNELS = {"python": pykernel}
if ACCELERATED:
    KERNELS["cython"] = _kernel

DEFAULT_MAX_INVOCATIONS = 1_048_576
DEFAULT_MAX_INSTRUCTIONS = 65_536


@dataclass(frozen=True)
class InterpLimits:
    max_invocations: int = DEFAULT_MAX_INVOCATIONS
    max_instructions_per_invocation: int = DEFAULT_MAX_INSTRUCTIONS

    def __post_init__(self):
        if self.max_invocations <= 0 or self.max_instructions_per_invocation <= 0:
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class ExecStats:
    invocations: int
    instructions: int


def kernel_name() -> str:
    return _default_kernel.KERNEL_NAME


def dry_run(module: SpirvModule, entry: str,
            info: ModuleInfo | None = None) -> ComplianceReport:
    """Subset-compliance report for an entry point, without executing."""
    return check_subset(module, entry, info=info)


def execute(
    module: SpirvModule,
    entry: str,
    groups: tuple[int, int, int],
    buffers: dict[tuple[int, int], bytearray],
    limits: InterpLimits = InterpLimits(),
    program: Program | None = None,
    kernel=None,
) -> ExecStats:
    """Run every invocation of a dispatch sequentially; mutates buffers in place.

    `program` may be supplied to skip re-lowering (the executor caches it).
    """
    if program is None:
        program = lower(module, entry)
    kern = kernel or _default_kernel

    gx, gy, gz = groups
    lx, ly, lz = program.local_size
    total = gx * gy * gz * lx * ly * lz
    if total > limits.max_invocations:
        raise LimitExceeded(
            f"{total} invocations exceed the limit of {limits.max_invocations}"
        )
    if program.instructions_per_invocation > limits.max_instructions_per_invocation:
        raise LimitExceeded(
            f"{program.instructions_per_invocation} instructions per invocation "
            f"exceed the limit of {limits.max_instructions_per_invocation}"
        )

    ordered = []
    for slot in program.bindings:
        if slot not in buffers:
            raise MissingBinding(slot[0], slot[1])
        ordered.append(buffers[slot])

    try:
        invocations, instructions = kern.run(program, ordered, (gx, gy, gz))
    except MissingBinding:
        raise
    except Exception as exc:
        from ..errors import OutOfBoundsAccess

        if isinstance(exc, OutOfBoundsAccess) and 0 <= exc.buffer < len(program.bindings):
            raise OutOfBoundsAccess(program.bindings[exc.buffer], exc.offset) from None
        raise
    return ExecStats(invocations=invocations, instructions=instructions)
