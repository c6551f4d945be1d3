"""MetaImage (.mhd/.mha + .raw) reader and writer.

Deliberately restricted subset: 3D, binary, uncompressed, little-endian,
identity (or absent) TransformMatrix, element types MET_SHORT / MET_UCHAR /
MET_FLOAT. Anything outside the subset is a hard error rather than a silent
reinterpretation. Unknown header keys are kept verbatim in
``Volume.extra_header`` and written back on output.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError
from .volume import Volume

ELEMENT_TYPE_TO_DTYPE = {
    "MET_SHORT": np.dtype("<i2"),
    "MET_UCHAR": np.dtype("u1"),
    "MET_FLOAT": np.dtype("<f4"),
}
DTYPE_TO_ELEMENT_TYPE = {
    np.dtype(np.int16): "MET_SHORT",
    np.dtype(np.uint8): "MET_UCHAR",
    np.dtype(np.float32): "MET_FLOAT",
}

_IDENTITY_3X3 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)

# Keys with toolkit semantics; everything else round-trips via extra_header.
_CONSUMED_KEYS = {
    "ObjectType",
    "NDims",
    "BinaryData",
    "BinaryDataByteOrderMSB",
    "CompressedData",
    "TransformMatrix",
    "Offset",
    "ElementSpacing",
    "DimSize",
    "ElementType",
    "ElementNumberOfChannels",
    "HeaderSize",
    "ElementDataFile",
}


def _parse_bool(value: str, key: str, path: str) -> bool:
    v = value.strip().lower()
    if v == "true":
        return True
    if v == "false":
        return False
    raise FormatError(f"{path}: {key} must be True or False, got {value!r}")


def _parse_floats(value: str, key: str, path: str, n: int) -> tuple[float, ...]:
    parts = value.split()
    if len(parts) != n:
        raise FormatError(f"{path}: {key} expects {n} values, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric {key}: {value!r}") from exc


def read_metaimage(header_path: str | os.PathLike) -> Volume:
    """Read a MetaImage volume from a .mhd/.mha header.

    The payload may live in an external raw file (ElementDataFile = <name>)
    or follow the header in the same file (ElementDataFile = LOCAL).
    """
    header_path = os.fspath(header_path)
    with open(header_path, "rb") as fh:
        blob = fh.read()

    header: dict[str, str] = {}
    order: list[str] = []
    payload_offset = None
    pos = 0
    while pos < len(blob):
        eol = blob.find(b"\n", pos)
        if eol == -1:
            eol = len(blob)
        line = blob[pos:eol]
        pos = eol + 1
        try:
            text = line.decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise FormatError(f"{header_path}: non-ASCII header line") from exc
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise FormatError(f"{header_path}: malformed header line {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        header[key] = value
        order.append(key)
        if key == "ElementDataFile":
            payload_offset = pos
            break
    if payload_offset is None:
        raise FormatError(f"{header_path}: missing ElementDataFile key")

    # Subset validation.
    if header.get("ObjectType", "Image") != "Image":
        raise FormatError(f"{header_path}: unsupported ObjectType {header['ObjectType']!r}")
    ndims = int(header.get("NDims", "0"))
    if ndims != 3:
        raise FormatError(f"{header_path}: unsupported NDims {ndims}, only 3 is supported")
    if "BinaryData" in header and not _parse_bool(header["BinaryData"], "BinaryData", header_path):
        raise FormatError(f"{header_path}: ASCII data is not supported")
    if "BinaryDataByteOrderMSB" in header and _parse_bool(
        header["BinaryDataByteOrderMSB"], "BinaryDataByteOrderMSB", header_path
    ):
        raise FormatError(f"{header_path}: big-endian data is not supported")
    if "CompressedData" in header and _parse_bool(
        header["CompressedData"], "CompressedData", header_path
    ):
        raise FormatError(f"{header_path}: compressed data is not supported")
    if "TransformMatrix" in header:
        matrix = _parse_floats(header["TransformMatrix"], "TransformMatrix", header_path, 9)
        if matrix != _IDENTITY_3X3:
            raise FormatError(
                f"{header_path}: only the identity TransformMatrix is supported, got {matrix}"
            )
    if "ElementNumberOfChannels" in header and header["ElementNumberOfChannels"].strip() != "1":
        raise FormatError(f"{header_path}: multi-channel volumes are not supported")
    if "HeaderSize" in header and header["HeaderSize"].strip() not in ("0",):
        raise FormatError(f"{header_path}: nonzero HeaderSize is not supported")

    if "DimSize" not in header:
        raise FormatError(f"{header_path}: missing DimSize")
    dims = tuple(int(round(v)) for v in _parse_floats(header["DimSize"], "DimSize", header_path, 3))
    if any(d <= 0 for d in dims):
        raise FormatError(f"{header_path}: non-positive DimSize {dims}")
    spacing = (
        _parse_floats(header["ElementSpacing"], "ElementSpacing", header_path, 3)
        if "ElementSpacing" in header
        else (1.0, 1.0, 1.0)
    )
    origin = (
        _parse_floats(header["Offset"], "Offset", header_path, 3)
        if "Offset" in header
        else (0.0, 0.0, 0.0)
    )
    element_type = header.get("ElementType")
    if element_type not in ELEMENT_TYPE_TO_DTYPE:
        raise FormatError(f"{header_path}: unsupported ElementType {element_type!r}")
    dtype = ELEMENT_TYPE_TO_DTYPE[element_type]

    data_file = header["ElementDataFile"].strip()
    if data_file == "LOCAL":
        payload = blob[payload_offset:]
    else:
        raw_path = os.path.join(os.path.dirname(header_path) or ".", data_file)
        if not os.path.exists(raw_path):
            raise FormatError(f"{header_path}: ElementDataFile {data_file!r} not found")
        with open(raw_path, "rb") as fh:
            payload = fh.read()

    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{header_path}: payload is {len(payload)} bytes, expected {expected} "
            f"({dims[0]}x{dims[1]}x{dims[2]} x {dtype.itemsize} bytes)"
        )

    data = np.frombuffer(payload, dtype=dtype).reshape(dims[2], dims[1], dims[0])
    extra = {k: header[k] for k in order if k not in _CONSUMED_KEYS}
    return Volume(data=data.astype(dtype.newbyteorder("="), copy=False),
                  spacing=spacing, origin=origin, extra_header=extra)


def write_metaimage(volume: Volume, header_path: str | os.PathLike) -> None:
    """Write a volume as .mhd header + sibling .raw payload.

    A ``.mha`` destination writes a single file with a LOCAL payload instead.
    Output is readable by :func:`read_metaimage` and by standard MetaImage
    consumers; ``read(write(v)) == v`` exactly.
    """
    header_path = os.fspath(header_path)
    local = header_path.endswith(".mha")
    element_type = DTYPE_TO_ELEMENT_TYPE[volume.data.dtype]
    payload = volume.data.astype(volume.data.dtype.newbyteorder("<"), copy=False).tobytes()

    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        "TransformMatrix = 1 0 0 0 1 0 0 0 1",
        "Offset = " + " ".join(repr(v) for v in volume.origin),
        "ElementSpacing = " + " ".join(repr(v) for v in volume.spacing),
        "DimSize = " + " ".join(str(d) for d in volume.dims),
    ]
    lines.extend(f"{key} = {value}" for key, value in volume.extra_header.items())
    lines.append(f"ElementType = {element_type}")

    if local:
        lines.append("ElementDataFile = LOCAL")
        with open(header_path, "wb") as fh:
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
            fh.write(payload)
    else:
        raw_name = os.path.splitext(os.path.basename(header_path))[0] + ".raw"
        lines.append(f"ElementDataFile = {raw_name}")
        with open(header_path, "wb") as fh:
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
        with open(os.path.join(os.path.dirname(header_path) or ".", raw_name), "wb") as fh:
            fh.write(payload)
