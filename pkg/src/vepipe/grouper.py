"""Run planning inside a scene, output scheduling and batch packing.

All frame indices handled here are scene-relative. A scene of ``m`` frames
is covered by ``ceil(m / n)`` runs. Every run but the last consumes the next
``n`` frames (plus the following frame as lookahead when the network takes an
extra frame). The last run re-consumes the final ``n`` frames of the scene,
recycling frames the previous run already covered, or pads a scene shorter
than ``n`` by repeating its last frame. At the scene end the lookahead is the
last frame repeated, so no run ever reads across a scene boundary.
"""

from dataclasses import dataclass, replace

from vepipe.errors import InvalidConfig


@dataclass(frozen=True)
class Run:
    """One inference invocation.

    Attributes:
        inputs: scene-relative frame index for each network input slot.
        fresh_start: first frame whose outputs this run emits.
        fresh_count: number of frames whose outputs this run emits.
        fresh_positions: consumed positions (input slots ``< n``) whose
            outputs are emitted, in increasing order.
        aligned: the run starts exactly ``n`` frames after the previous run
            and its lookahead is a real next frame, so it can share storage
            with neighbouring runs.
    """

    inputs: tuple
    fresh_start: int
    fresh_count: int
    fresh_positions: tuple
    aligned: bool = False

    @property
    def is_padding(self):
        return self.fresh_count == 0


@dataclass(frozen=True)
class RunPlan:
    runs: tuple
    n: int
    flags: object


@dataclass(frozen=True)
class NetworkOutput:
    """Output slot ``slot`` of the network's result for one lane."""

    slot: int


@dataclass(frozen=True)
class PassThrough:
    """The frame in input slot ``position`` emitted verbatim."""

    position: int


@dataclass(frozen=True)
class OutputSchedule:
    """Per run, the ``(source, presentation_index)`` pairs it emits."""

    runs: tuple

    def __iter__(self):
        return iter(self.runs)

    @property
    def count(self):
        return sum(len(r) for r in self.runs)


@dataclass(frozen=True)
class Batch:
    """``b`` lanes dispatched together. Lanes past ``real`` are emit-nothing padding."""

    lanes: tuple
    real: int
    shared: bool

    @property
    def first_frame(self):
        return self.lanes[0].inputs[0]


def run_count(m, n):
    return -(-m // n)


def regular_run(i, d):
    """Run ``i`` of a scene known to extend past frame ``(i + 1) * n``."""
    n = d.n
    start = i * n
    inputs = tuple(range(start, start + n))
    if d.flags.extra_frame:
        inputs += (start + n,)
    return Run(inputs, start, n, tuple(range(n)), aligned=True)


def final_run(m, d):
    """The last run of a scene of length ``m``."""
    n = d.n
    if m >= n:
        rem = m - (run_count(m, n) - 1) * n
        consumed = tuple(range(m - n, m))
        positions = tuple(range(n - rem, n))
        fresh_start, fresh_count = m - rem, rem
    else:
        consumed = tuple(range(m)) + (m - 1,) * (n - m)
        positions = tuple(range(m))
        fresh_start, fresh_count = 0, m
    if d.flags.extra_frame:
        consumed += (m - 1,)
    return Run(consumed, fresh_start, fresh_count, positions, aligned=False)


def plan_scene(m, d):
    """Plan all runs for a scene of ``m`` frames."""
    if m < 1:
        raise ValueError(f"scene length must be positive, got {m}")
    k = run_count(m, d.n)
    runs = tuple(regular_run(i, d) for i in range(k - 1)) + (final_run(m, d),)
    return RunPlan(runs, d.n, d.flags)


def schedule_run(run, d, base=0):
    """Presentation schedule of one run; see :func:`schedule_outputs`."""
    out = []
    interp, double = d.flags.interpolation, d.flags.double_frame
    for q in run.fresh_positions:
        f = run.inputs[q]
        if not interp:
            out.append((NetworkOutput(q), base + f))
        elif double:
            out.append((NetworkOutput(2 * q), base + 2 * f))
            out.append((NetworkOutput(2 * q + 1), base + 2 * f + 1))
        else:
            out.append((PassThrough(q), base + 2 * f))
            out.append((NetworkOutput(q), base + 2 * f + 1))
    return out


def schedule_outputs(plan, d, base_presentation=0):
    """Decide which network outputs each run emits and where they go.

    Without interpolation each fresh frame yields its enhanced output. With
    interpolation each fresh frame yields two outputs: itself (passed through,
    or enhanced when the network emits ``2n`` frames) followed by the
    intermediate frame after it. Outputs of recycled or padded positions are
    dropped.

    Args:
        plan: run plan for one scene.
        d: descriptor the plan was built for.
        base_presentation: presentation index of the scene's first output.
    """
    return OutputSchedule(tuple(schedule_run(r, d, base_presentation) for r in plan.runs))


def plan_batches(plan, b):
    """Pack one scene's runs, in order, into batches of exactly ``b`` lanes.

    A batch whose lanes are all aligned runs of an extra-frame network uses
    the shared store layout. A short last batch is padded by repeating its
    last real run with nothing to emit.
    """
    if b < 1:
        raise InvalidConfig(f"batch must be positive, got {b}")
    batches = []
    runs = list(plan.runs)
    for i in range(0, len(runs), b):
        lanes = runs[i:i + b]
        real = len(lanes)
        if real < b:
            pad = replace(lanes[-1], fresh_count=0, fresh_positions=(), aligned=False)
            lanes += [pad] * (b - real)
        shared = (bool(plan.flags.extra_frame) and real == b
                  and all(r.aligned for r in lanes))
        batches.append(Batch(tuple(lanes), real, shared))
    return batches


def emitted_count(total_frames, d):
    """Number of output frames a stream of ``total_frames`` produces."""
    return total_frames * d.frame_rate_factor
