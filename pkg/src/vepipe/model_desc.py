"""Network behavior descriptor and task classification."""

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from vepipe.colorproc import ColorSpace, PixelFormat
from vepipe.errors import InvalidConfig


@dataclass(frozen=True)
class NetworkFlags:
    """Behavior flags declared by a model provider.

    Attributes:
        interpolation: output is produced at doubled frame rate.
        extra_frame: the network takes ``n + 1`` input frames instead of ``n``.
        double_frame: the network produces ``2n`` frames per run instead of ``n``.
    """

    interpolation: bool = False
    extra_frame: bool = False
    double_frame: bool = False


class EnhancementTask(enum.Enum):
    DENOISE = "denoise"
    SUPER_RESOLUTION = "super-resolution"
    DEINTERLACE = "deinterlace"
    INTERPOLATION = "interpolation"
    INTERPOLATION_WITH_DENOISE = "interpolation-with-denoise"
    SPATIO_TEMPORAL_SR = "spatio-temporal-sr"


@dataclass(frozen=True)
class NetworkDescriptor:
    """Everything the engine needs to know to plan runs for a network.

    ``n`` is the number of frames consumed by one inference run. With
    ``flags.extra_frame`` the network additionally sees the first frame of
    the next group as a lookahead.
    """

    n: int = 1
    flags: NetworkFlags = NetworkFlags()
    scale_x: Fraction = Fraction(1)
    scale_y: Fraction = Fraction(1)
    batch: int = 1
    pixel_format: PixelFormat = PixelFormat.YUV420
    colorspaces: frozenset = field(default_factory=lambda: frozenset(ColorSpace))
    pyramid_levels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scale_x", Fraction(self.scale_x))
        object.__setattr__(self, "scale_y", Fraction(self.scale_y))
        object.__setattr__(self, "colorspaces", frozenset(self.colorspaces))

    def input_count(self):
        return self.n + (1 if self.flags.extra_frame else 0)

    def outputs_per_run(self):
        return 2 * self.n if self.flags.double_frame else self.n

    @property
    def frame_rate_factor(self):
        return 2 if self.flags.interpolation else 1

    def output_dims(self, width, height):
        """Scaled output dimensions; raises :class:`InvalidConfig` unless integral."""
        ow = width * self.scale_x
        oh = height * self.scale_y
        if ow.denominator != 1 or oh.denominator != 1:
            raise InvalidConfig(
                f"scale {self.scale_x}x{self.scale_y} of {width}x{height} "
                f"gives non-integral output {ow}x{oh}")
        return int(ow), int(oh)


def validate_descriptor(d):
    """Check every descriptor invariant, raising :class:`InvalidConfig` on the first violation."""
    if not isinstance(d.n, int) or d.n < 1:
        raise InvalidConfig(f"n must be a positive integer, got {d.n!r}")
    if not isinstance(d.batch, int) or d.batch < 1:
        raise InvalidConfig(f"batch must be a positive integer, got {d.batch!r}")
    if not isinstance(d.pyramid_levels, int) or d.pyramid_levels < 1:
        raise InvalidConfig(
            f"pyramid_levels must be a positive integer, got {d.pyramid_levels!r}")
    if d.scale_x <= 0 or d.scale_y <= 0:
        raise InvalidConfig(f"scale factors must be positive, got {d.scale_x}, {d.scale_y}")
    if not d.colorspaces:
        raise InvalidConfig("descriptor must support at least one colorspace")
    if d.flags.double_frame and not d.flags.interpolation:
        raise InvalidConfig("double_frame requires interpolation")
    if d.flags.interpolation and not d.flags.double_frame:
        if d.scale_x != 1 or d.scale_y != 1:
            raise InvalidConfig(
                "interpolation without double_frame passes input frames through "
                "unchanged, so both scale factors must be 1")


def classify_task(d):
    sx, sy, f = d.scale_x, d.scale_y, d.flags
    if f.interpolation:
        if not f.double_frame:
            return EnhancementTask.INTERPOLATION
        if sx == 1 and sy == 1:
            return EnhancementTask.INTERPOLATION_WITH_DENOISE
        return EnhancementTask.SPATIO_TEMPORAL_SR
    if sx == 1 and sy == 1:
        return EnhancementTask.DENOISE
    if sx == 1 and sy == 2:
        return EnhancementTask.DEINTERLACE
    return EnhancementTask.SUPER_RESOLUTION
