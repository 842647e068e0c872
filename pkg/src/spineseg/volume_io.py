"""MetaImage volume I/O and 2D raster handling.

Supports a deliberately small MetaImage subset: 3D volumes, four element
types, raw in-file payload only (``ElementDataFile = LOCAL``).  Slices come
out as 2D numpy rasters; label rasters use the four-level grayscale
encoding 0/85/170/255 for background/vertebrae/canal/disc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    ExcessPayloadError,
    MalformedLineError,
    MissingKeyError,
    TruncatedPayloadError,
    UnknownLevelError,
    UnsupportedValueError,
)

ELEMENT_DTYPES = {
    "MET_UCHAR": np.dtype(np.uint8),
    "MET_SHORT": np.dtype(np.int16),
    "MET_USHORT": np.dtype(np.uint16),
    "MET_FLOAT": np.dtype(np.float32),
}

_KNOWN_KEYS = (
    "NDims",
    "DimSize",
    "ElementType",
    "ElementSpacing",
    "BinaryData",
    "BinaryDataByteOrderMSB",
)

SAGITTAL_DEFAULT = "sagittal_default"
AXIAL_OVERRIDE = "axial_override"

# canonical grayscale levels for the four mask classes, class k -> k*85
LABEL_LEVELS = (0, 85, 170, 255)


@dataclass
class VolumeHeader:
    """Parsed header of one volume.

    ``header_byte_length`` is the offset of the first voxel byte, i.e. the
    length of the ASCII header including the terminator line's newline.
    ``extra_keys`` preserves unrecognized pairs in file order so a write
    round trip loses nothing.
    """

    ndims: int
    dim_size: tuple[int, int, int]
    element_type: str
    element_spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    binary_data: bool = True
    byte_order_msb: bool = False
    extra_keys: list[tuple[str, str]] = field(default_factory=list)
    header_byte_length: int = 0

    @property
    def dtype(self) -> np.dtype:
        return ELEMENT_DTYPES[self.element_type]

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dim_size
        return nx * ny * nz


@dataclass
class Volume:
    """A header plus voxels shaped ``(nz, ny, nx)`` in native byte order.

    DimSize lists x first and the payload is x-fastest, so the natural
    C-order numpy shape puts x last.
    """

    header: VolumeHeader
    voxels: np.ndarray


@dataclass
class SliceSpec:
    """How to turn a volume into 2D slices.

    ``axis`` selects the stacking direction: ``sagittal_default`` walks the
    third DimSize axis (one raster per z index), ``axial_override`` walks
    the first.  Rotation is counterclockwise quarter turns and is applied
    before the flips.
    """

    axis: str = SAGITTAL_DEFAULT
    rotate_quarter_turns: int = 0
    flip_horizontal: bool = False
    flip_vertical: bool = False


def _parse_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise UnsupportedValueError(f"{key}: not an integer: {value!r}") from None


def _parse_bool(value: str, key: str) -> bool:
    if value == "True":
        return True
    if value == "False":
        return False
    raise UnsupportedValueError(f"{key}: expected True or False, got {value!r}")


def parse_header(data: bytes) -> VolumeHeader:
    """Parse the ASCII header portion of a volume file.

    Lines are ``key = value`` pairs; the header ends at the
    ``ElementDataFile = LOCAL`` terminator.  Raises MissingKeyError,
    UnsupportedValueError or MalformedLineError accordingly.
    """
    pos = 0
    pairs: list[tuple[str, str]] = []
    header_end = -1
    while pos < len(data):
        nl = data.find(b"\n", pos)
        end = len(data) if nl == -1 else nl
        next_pos = len(data) if nl == -1 else nl + 1
        raw = data[pos:end]
        try:
            line = raw.decode("ascii")
        except UnicodeDecodeError:
            raise MalformedLineError(f"non-ASCII bytes in header line at offset {pos}") from None
        if "=" not in line:
            raise MalformedLineError(f"header line without '=': {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "ElementDataFile":
            if value != "LOCAL":
                raise UnsupportedValueError(
                    f"ElementDataFile: only LOCAL payloads are supported, got {value!r}"
                )
            header_end = next_pos
            break
        pairs.append((key, value))
        pos = next_pos
    if header_end < 0:
        raise MissingKeyError("ElementDataFile terminator never found")

    known: dict[str, str] = {}
    extra: list[tuple[str, str]] = []
    for key, value in pairs:
        if key in _KNOWN_KEYS:
            known[key] = value
        else:
            extra.append((key, value))

    for req in ("NDims", "DimSize", "ElementType"):
        if req not in known:
            raise MissingKeyError(f"required header key missing: {req}")

    ndims = _parse_int(known["NDims"], "NDims")
    if ndims != 3:
        raise UnsupportedValueError(f"NDims: only 3 is supported, got {ndims}")

    parts = known["DimSize"].split()
    if len(parts) != 3:
        raise UnsupportedValueError(f"DimSize: expected 3 integers, got {known['DimSize']!r}")
    dim_size = tuple(_parse_int(p, "DimSize") for p in parts)
    if any(d < 1 for d in dim_size):
        raise UnsupportedValueError(f"DimSize: every extent must be >= 1, got {dim_size}")

    element_type = known["ElementType"]
    if element_type not in ELEMENT_DTYPES:
        raise UnsupportedValueError(f"ElementType: unsupported type {element_type!r}")

    spacing = (1.0, 1.0, 1.0)
    if "ElementSpacing" in known:
        sparts = known["ElementSpacing"].split()
        if len(sparts) != 3:
            raise UnsupportedValueError(
                f"ElementSpacing: expected 3 floats, got {known['ElementSpacing']!r}"
            )
        try:
            spacing = tuple(float(p) for p in sparts)
        except ValueError:
            raise UnsupportedValueError(
                f"ElementSpacing: not floats: {known['ElementSpacing']!r}"
            ) from None
        if any(s <= 0 for s in spacing):
            raise UnsupportedValueError(f"ElementSpacing: must be positive, got {spacing}")

    binary_data = True
    if "BinaryData" in known:
        binary_data = _parse_bool(known["BinaryData"], "BinaryData")
        if not binary_data:
            raise UnsupportedValueError("BinaryData: only binary payloads are supported")

    byte_order_msb = False
    if "BinaryDataByteOrderMSB" in known:
        byte_order_msb = _parse_bool(known["BinaryDataByteOrderMSB"], "BinaryDataByteOrderMSB")

    return VolumeHeader(
        ndims=ndims,
        dim_size=dim_size,
        element_type=element_type,
        element_spacing=spacing,
        binary_data=binary_data,
        byte_order_msb=byte_order_msb,
        extra_keys=extra,
        header_byte_length=header_end,
    )


def read_volume(data: bytes) -> Volume:
    """Parse a whole volume file from bytes, header plus payload."""
    header = parse_header(data)
    payload = data[header.header_byte_length:]
    expected = header.voxel_count * header.dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise ExcessPayloadError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    order = ">" if header.byte_order_msb else "<"
    wire_dtype = header.dtype.newbyteorder(order)
    nx, ny, nz = header.dim_size
    voxels = np.frombuffer(payload, dtype=wire_dtype).reshape(nz, ny, nx)
    # keep voxels in native order and writable
    voxels = np.ascontiguousarray(voxels.astype(header.dtype))
    return Volume(header=header, voxels=voxels)


def write_volume(volume: Volume) -> bytes:
    """Serialize a volume back to bytes.

    Emits a canonical key order so writing what read_volume produced is
    byte-identical.
    """
    h = volume.header
    nx, ny, nz = h.dim_size
    if volume.voxels.shape != (nz, ny, nx):
        raise UnsupportedValueError(
            f"voxel shape {volume.voxels.shape} does not match DimSize {h.dim_size}"
        )
    if volume.voxels.dtype != h.dtype:
        raise UnsupportedValueError(
            f"voxel dtype {volume.voxels.dtype} does not match {h.element_type}"
        )
    lines = [
        f"NDims = {h.ndims}",
        f"DimSize = {nx} {ny} {nz}",
        f"ElementType = {h.element_type}",
        "ElementSpacing = " + " ".join(repr(float(s)) for s in h.element_spacing),
        f"BinaryData = {h.binary_data}",
        f"BinaryDataByteOrderMSB = {h.byte_order_msb}",
    ]
    lines.extend(f"{key} = {value}" for key, value in h.extra_keys)
    lines.append("ElementDataFile = LOCAL")
    text = "\n".join(lines) + "\n"
    order = ">" if h.byte_order_msb else "<"
    payload = np.ascontiguousarray(volume.voxels).astype(h.dtype.newbyteorder(order)).tobytes()
    return text.encode("ascii") + payload


def make_volume(voxels: np.ndarray, element_type: str | None = None,
                spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Volume:
    """Build a Volume around an existing ``(nz, ny, nx)`` array."""
    arr = np.asarray(voxels)
    if arr.ndim != 3:
        raise UnsupportedValueError(f"expected a 3D array, got shape {arr.shape}")
    if element_type is None:
        matches = [name for name, dt in ELEMENT_DTYPES.items() if dt == arr.dtype]
        if not matches:
            raise UnsupportedValueError(f"no element type for dtype {arr.dtype}")
        element_type = matches[0]
    arr = arr.astype(ELEMENT_DTYPES[element_type])
    nz, ny, nx = arr.shape
    header = VolumeHeader(
        ndims=3,
        dim_size=(nx, ny, nz),
        element_type=element_type,
        element_spacing=tuple(float(s) for s in spacing),
    )
    return Volume(header=header, voxels=arr)


def load_volume(path) -> Volume:
    with open(path, "rb") as fh:
        return read_volume(fh.read())


def save_volume(path, volume: Volume) -> None:
    with open(path, "wb") as fh:
        fh.write(write_volume(volume))


def _orient(slc: np.ndarray, spec: SliceSpec) -> np.ndarray:
    out = np.rot90(slc, spec.rotate_quarter_turns % 4)
    if spec.flip_horizontal:
        out = np.fliplr(out)
    if spec.flip_vertical:
        out = np.flipud(out)
    return np.ascontiguousarray(out)


def _scale_to_gray8(slc: np.ndarray) -> np.ndarray:
    lo = float(slc.min())
    hi = float(slc.max())
    if hi == lo:
        # constant slice carries no contrast, map it to black
        return np.zeros(slc.shape, dtype=np.uint8)
    scaled = np.rint((slc.astype(np.float64) - lo) * (255.0 / (hi - lo)))
    return scaled.astype(np.uint8)


def extract_slices(volume: Volume, spec: SliceSpec | None = None,
                   mode: str = "image") -> list[np.ndarray]:
    """Cut a volume into oriented 2D rasters.

    ``mode="image"`` min-max scales each slice independently to uint8;
    ``mode="mask"`` passes raw values through unchanged (they must already
    fit in 8 bits).
    """
    spec = spec or SliceSpec()
    if spec.axis not in (SAGITTAL_DEFAULT, AXIAL_OVERRIDE):
        raise UnsupportedValueError(f"unknown slicing axis {spec.axis!r}")
    if mode not in ("image", "mask"):
        raise UnsupportedValueError(f"unknown slicing mode {mode!r}")
    vox = volume.voxels
    if spec.axis == SAGITTAL_DEFAULT:
        raw = [vox[k] for k in range(vox.shape[0])]
    else:
        raw = [vox[:, :, k] for k in range(vox.shape[2])]
    out = []
    for slc in raw:
        slc = _orient(slc, spec)
        if mode == "image":
            out.append(_scale_to_gray8(slc))
        else:
            if not np.issubdtype(slc.dtype, np.integer):
                raise UnsupportedValueError("mask volumes must hold integer voxels")
            if slc.size and (slc.min() < 0 or slc.max() > 255):
                raise UnsupportedValueError(
                    f"mask values outside [0, 255]: min {slc.min()}, max {slc.max()}"
                )
            out.append(slc.astype(np.uint8))
    return out


def encode_label_raster(labels: np.ndarray) -> np.ndarray:
    """Map class labels 0..3 to the canonical gray levels 0/85/170/255."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label raster must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise UnsupportedValueError("label raster must be integer typed")
    if arr.size and (arr.min() < 0 or arr.max() > 3):
        raise UnknownLevelError(
            f"labels outside 0..3: min {arr.min()}, max {arr.max()}"
        )
    return (arr.astype(np.uint8) * 85).astype(np.uint8)


def decode_label_raster(gray: np.ndarray) -> np.ndarray:
    """Invert encode_label_raster; any other level raises UnknownLevelError."""
    arr = np.asarray(gray)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label raster must be 2D, got shape {arr.shape}")
    levels = np.asarray(LABEL_LEVELS, dtype=np.int64)
    flat = arr.astype(np.int64)
    hits = flat[..., None] == levels
    ok = hits.any(axis=-1)
    if not ok.all():
        bad = np.unique(flat[~ok])
        raise UnknownLevelError(f"gray levels outside the label encoding: {bad.tolist()}")
    return hits.argmax(axis=-1).astype(np.uint8)


def read_raster(path) -> np.ndarray:
    """Read a PNG as a gray (h, w) or RGB (h, w, 3) uint8 array."""
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        if img.mode == "RGB":
            return np.asarray(img, dtype=np.uint8)
        raise UnsupportedValueError(f"unsupported image mode {img.mode!r} in {path}")


def write_raster(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == 2:
        img = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise UnsupportedValueError(f"raster shape {arr.shape} is neither gray nor RGB")
    img.save(path, format="PNG")
