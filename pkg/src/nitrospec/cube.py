"""Hyperspectral cube I/O, white/dark reflectance calibration, ROI spectra, RGB.

Headers follow the ENVI ``key = value`` convention; payloads are headerless
binary in a sibling file.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .preprocess import Spectrum, SpectrumError

RGB_WAVELENGTHS_NM = (677.732, 547.321, 487.642)  # R, G, B
DEFAULT_WHITE_ABS = 0.99

_DATA_TYPES = {12: "uint16", 4: "float32"}
_DATA_CODES = {v: k for k, v in _DATA_TYPES.items()}
_INTERLEAVES = ("bil", "bip", "bsq")
_REQUIRED = ("samples", "lines", "bands", "interleave", "data type", "wavelength")


class CubeError(ValueError):
    pass


class HeaderError(CubeError):
    pass


@dataclass(frozen=True)
class CubeHeader:
    lines: int
    samples: int
    bands: int
    interleave: str
    data_kind: str
    wavelengths_nm: tuple
    byte_order: str = "little"

    def __post_init__(self):
        for key in ("lines", "samples", "bands"):
            if int(getattr(self, key)) < 1:
                raise HeaderError(f"{key} must be >= 1")
        if self.interleave not in _INTERLEAVES:
            raise HeaderError(f"unknown interleave: {self.interleave}")
        if self.data_kind not in _DATA_CODES:
            raise HeaderError(f"unsupported data kind: {self.data_kind}")
        if self.byte_order not in ("little", "big"):
            raise HeaderError(f"unknown byte order: {self.byte_order}")
        wl = tuple(float(w) for w in self.wavelengths_nm)
        if len(wl) != self.bands:
            raise HeaderError(f"bands = {self.bands} but {len(wl)} wavelengths listed")
        for i in range(1, len(wl)):
            if not wl[i] > wl[i - 1]:
                raise HeaderError(f"wavelengths not increasing at index {i}")
        object.__setattr__(self, "wavelengths_nm", wl)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.data_kind).newbyteorder("<" if self.byte_order == "little" else ">")

    @property
    def payload_size(self) -> int:
        return self.lines * self.samples * self.bands * self.dtype.itemsize


def _collect_entries(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith(";") or "=" not in line:
            continue
        key, _, val = line.partition("=")
        key = " ".join(key.strip().lower().split())
        val = val.strip()
        if val.startswith("{"):
            while "}" not in val and i < len(lines):
                val += " " + lines[i].strip()
                i += 1
            if "}" not in val:
                raise HeaderError(f"unterminated brace list for key: {key}")
        entries[key] = val
    return entries


def _int_field(entries: dict, key: str) -> int:
    try:
        return int(entries[key])
    except ValueError:
        raise HeaderError(f"invalid integer for key {key}: {entries[key]!r}") from None


def parse_header(text: str) -> CubeHeader:
    entries = _collect_entries(text)
    for key in _REQUIRED:
        if key not in entries:
            raise HeaderError(f"missing key: {key}")
    interleave = entries["interleave"].lower()
    if interleave not in _INTERLEAVES:
        raise HeaderError(f"unknown interleave: {entries['interleave']}")
    code = _int_field(entries, "data type")
    if code not in _DATA_TYPES:
        raise HeaderError(f"unsupported data type: {code}")
    order = _int_field(entries, "byte order") if "byte order" in entries else 0
    if order not in (0, 1):
        raise HeaderError(f"invalid byte order: {order}")
    raw = entries["wavelength"].strip().lstrip("{").rstrip("}")
    try:
        wl = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise HeaderError("invalid number in key: wavelength") from None
    return CubeHeader(
        lines=_int_field(entries, "lines"),
        samples=_int_field(entries, "samples"),
        bands=_int_field(entries, "bands"),
        interleave=interleave,
        data_kind=_DATA_TYPES[code],
        wavelengths_nm=wl,
        byte_order="little" if order == 0 else "big",
    )


def format_header(h: CubeHeader) -> str:
    wl = ", ".join(repr(w) for w in h.wavelengths_nm)
    return (
        "ENVI\n"
        f"samples = {h.samples}\n"
        f"lines = {h.lines}\n"
        f"bands = {h.bands}\n"
        f"interleave = {h.interleave}\n"
        f"data type = {_DATA_CODES[h.data_kind]}\n"
        f"byte order = {0 if h.byte_order == 'little' else 1}\n"
        f"wavelength = {{{wl}}}\n"
    )


@dataclass(frozen=True)
class HyperCube:
    """Reflectance or raw intensity indexed ``values[line, sample, band]``."""

    header: CubeHeader
    values: np.ndarray
    calibrated: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        h = self.header
        if v.shape != (h.lines, h.samples, h.bands):
            raise CubeError(f"array shape {v.shape} does not match header "
                            f"({h.lines}, {h.samples}, {h.bands})")
        if self.calibrated and not np.all(np.isfinite(v)):
            raise CubeError("calibrated cube contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.header.wavelengths_nm)


def read_cube(header: CubeHeader, payload: bytes) -> HyperCube:
    expected = header.payload_size
    if len(payload) != expected:
        raise CubeError(f"payload length mismatch: expected {expected} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype=header.dtype).astype(float)
    L, S, B = header.lines, header.samples, header.bands
    if header.interleave == "bil":
        values = flat.reshape(L, B, S).transpose(0, 2, 1)
    elif header.interleave == "bip":
        values = flat.reshape(L, S, B)
    else:
        values = flat.reshape(B, L, S).transpose(1, 2, 0)
    return HyperCube(header, np.ascontiguousarray(values))


def cube_bytes(cube: HyperCube, interleave: str | None = None) -> tuple[CubeHeader, bytes]:
    """Serialise ``cube`` (optionally re-interleaved); returns header and payload."""
    h = cube.header
    if interleave is not None:
        h = dataclasses.replace(h, interleave=interleave.lower())
    v = cube.values
    if h.interleave == "bil":
        arr = v.transpose(0, 2, 1)
    elif h.interleave == "bip":
        arr = v
    else:
        arr = v.transpose(2, 0, 1)
    if h.data_kind == "uint16":
        if np.any((v < 0) | (v > 65535) | (v != np.round(v))):
            raise CubeError("values not representable as uint16")
    return h, np.ascontiguousarray(arr).astype(h.dtype).tobytes()


def payload_path_for(header_path: Path) -> Path:
    header_path = Path(header_path)
    stem = header_path.with_suffix("")
    for ext in (".raw", ".img", ".bil", ".bip", ".bsq", ".dat", ""):
        cand = stem.with_suffix(ext) if ext else stem
        if cand.exists() and cand != header_path:
            return cand
    raise CubeError(f"no payload file found next to {header_path}")


def load_cube(header_path, payload_path=None) -> HyperCube:
    header_path = Path(header_path)
    header = parse_header(header_path.read_text())
    payload_path = Path(payload_path) if payload_path else payload_path_for(header_path)
    return read_cube(header, payload_path.read_bytes())


def save_cube(cube: HyperCube, header_path, payload_path=None, interleave=None) -> Path:
    header_path = Path(header_path)
    h, payload = cube_bytes(cube, interleave)
    payload_path = Path(payload_path) if payload_path else header_path.with_suffix(".raw")
    header_path.write_text(format_header(h))
    payload_path.write_bytes(payload)
    return payload_path


# -- ROIs ---------------------------------------------------------------------

ROI_KINDS = ("white_ref", "dark_ref", "target")


@dataclass(frozen=True)
class Roi:
    id: str
    kind: str
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.kind not in ROI_KINDS:
            raise CubeError(f"ROI {self.id}: unknown kind {self.kind!r}")
        if self.width < 1 or self.height < 1:
            raise CubeError(f"ROI {self.id}: empty rectangle")
        if self.x < 0 or self.y < 0:
            raise CubeError(f"ROI {self.id}: negative offset")

    def check_inside(self, header: CubeHeader) -> None:
        if self.x + self.width > header.samples or self.y + self.height > header.lines:
            raise CubeError(f"ROI {self.id} extends outside the {header.lines}x{header.samples} cube")

    def pixels(self, cube: HyperCube) -> np.ndarray:
        """ROI pixels as an (m, bands) array; x runs along samples, y along lines."""
        self.check_inside(cube.header)
        block = cube.values[self.y:self.y + self.height, self.x:self.x + self.width, :]
        return block.reshape(-1, cube.header.bands)


def read_rois(source) -> list[Roi]:
    """Parse ROI CSV (``roi_id,kind,x,y,width,height``) from a path or text."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
    else:
        text = str(source)
    reader = csv.DictReader(io.StringIO(text))
    missing = {"roi_id", "kind", "x", "y", "width", "height"} - set(reader.fieldnames or ())
    if missing:
        raise CubeError(f"ROI file missing columns: {sorted(missing)}")
    return [
        Roi(row["roi_id"].strip(), row["kind"].strip(), int(row["x"]), int(row["y"]),
            int(row["width"]), int(row["height"]))
        for row in reader
    ]


def format_rois(rois: Iterable[Roi]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["roi_id", "kind", "x", "y", "width", "height"])
    for r in rois:
        w.writerow([r.id, r.kind, r.x, r.y, r.width, r.height])
    return out.getvalue()


# -- calibration ----------------------------------------------------------------

def reference_means(cube: HyperCube, white: Roi, dark: Roi) -> tuple[np.ndarray, np.ndarray]:
    if white.kind != "white_ref" or dark.kind != "dark_ref":
        raise CubeError("expected a white_ref and a dark_ref ROI")
    w = white.pixels(cube).mean(axis=0)
    d = dark.pixels(cube).mean(axis=0)
    bad = np.nonzero(~(w > d))[0]
    if bad.size:
        b = int(bad[0])
        raise CubeError(f"white reference not above dark reference at band {b} "
                        f"({cube.header.wavelengths_nm[b]} nm)")
    return w, d


def apply_correction(values: np.ndarray, white_mean: np.ndarray, dark_mean: np.ndarray,
                     white_abs: float = DEFAULT_WHITE_ABS) -> np.ndarray:
    """(raw - dark) / (white - dark) * white_abs, broadcast over the band axis."""
    return (np.asarray(values, dtype=float) - dark_mean) / (white_mean - dark_mean) * white_abs


def correct_reflectance(cube: HyperCube, white: Roi, dark: Roi,
                        white_abs: float = DEFAULT_WHITE_ABS) -> HyperCube:
    if cube.calibrated:
        raise CubeError("cube is already calibrated")
    if not 0 < white_abs <= 1:
        raise CubeError(f"white_abs must be in (0, 1], got {white_abs}")
    w, d = reference_means(cube, white, dark)
    # negative values from noise are kept on purpose
    return HyperCube(cube.header, apply_correction(cube.values, w, d, white_abs), calibrated=True)


def extract_roi_spectrum(cube: HyperCube, roi: Roi) -> Spectrum:
    if not cube.calibrated:
        raise CubeError("ROI spectra require a calibrated cube")
    if roi.kind != "target":
        raise CubeError(f"ROI {roi.id} is a {roi.kind}, not a target")
    return Spectrum(cube.grid, roi.pixels(cube).mean(axis=0))


def mean_of_rois(spectra: Sequence[Spectrum]) -> Spectrum:
    if not spectra:
        raise SpectrumError("need at least one spectrum")
    grid = spectra[0].grid
    for s in spectra[1:]:
        if s.grid.shape != grid.shape or not np.array_equal(s.grid, grid):
            raise SpectrumError("spectra are on different band grids")
    return Spectrum(grid, np.mean([s.reflectance for s in spectra], axis=0))


# -- RGB ------------------------------------------------------------------------

def nearest_band(grid: np.ndarray, wavelength: float) -> int:
    """Index of the band closest to ``wavelength``; ties go to the shorter one."""
    return int(np.argmin(np.abs(np.asarray(grid) - wavelength)))


def _stretch(channel: np.ndarray) -> np.ndarray:
    lo, hi = float(channel.min()), float(channel.max())
    if hi > lo:
        unit = (channel - lo) / (hi - lo)
    else:
        unit = np.full_like(channel, 0.5)
    return np.floor(unit * 255 + 0.5).astype(np.uint8)


def render_rgb(cube: HyperCube) -> np.ndarray:
    """8-bit (lines, samples, 3) composite from the bands nearest 678/547/488 nm."""
    if not cube.calibrated:
        raise CubeError("RGB rendering requires a calibrated cube")
    idx = [nearest_band(cube.grid, w) for w in RGB_WAVELENGTHS_NM]
    return np.stack([_stretch(cube.values[:, :, b]) for b in idx], axis=-1)


def ppm_bytes(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


def write_ppm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def read_ppm(data: bytes) -> np.ndarray:
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise CubeError("not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise CubeError("only 8-bit PPM supported")
    pixels = data[len(data) - w * h * 3:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)
