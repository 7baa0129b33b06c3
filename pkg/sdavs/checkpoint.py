"""
Tensor container used for checkpoints and exported spectrograms.

Layout::

    [8 bytes]  little-endian u64 header length N
    [N bytes]  UTF-8 JSON {name: {"shape", "offset", "length"}, "__metadata__": {str: str}}
    [payload]  concatenated little-endian float32 tensors

Offsets are relative to the start of the payload. The header is serialized
with sorted keys and no whitespace so the same tensors and metadata always
give the same bytes.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import CheckpointError

logger = logging.getLogger(__name__)

METADATA_KEY = '__metadata__'
FORMAT_VERSION = '1'
_HEADER_SIZE = struct.Struct('<Q')


def encode_container(tensors: Mapping[str, np.ndarray], metadata: Optional[Mapping[str, str]] = None) -> bytes:
    header, chunks, offset = {}, [], 0
    for name, array in tensors.items():
        if name == METADATA_KEY:
            raise CheckpointError(f"'{METADATA_KEY}' is a reserved entry name")
        payload = np.ascontiguousarray(array, dtype='<f4').tobytes()
        header[name] = {'shape': list(np.shape(array)), 'offset': offset, 'length': len(payload)}
        chunks.append(payload)
        offset += len(payload)
    if metadata:
        header[METADATA_KEY] = {str(k): str(v) for k, v in metadata.items()}
    blob = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return _HEADER_SIZE.pack(len(blob)) + blob + b''.join(chunks)


def decode_container(data: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    """Inverse of :func:`encode_container`; tensors come back in payload order"""
    if len(data) < _HEADER_SIZE.size:
        raise CheckpointError(f"file is {len(data)} bytes, shorter than the {_HEADER_SIZE.size}-byte length prefix")
    (header_len,) = _HEADER_SIZE.unpack_from(data, 0)
    start = _HEADER_SIZE.size + header_len
    if start > len(data):
        raise CheckpointError(
            f"header claims {header_len} bytes at offset {_HEADER_SIZE.size} but the file ends at {len(data)}")
    try:
        header = json.loads(data[_HEADER_SIZE.size:start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header at offset {_HEADER_SIZE.size}: {exc}") from None

    metadata = header.pop(METADATA_KEY, {})
    payload_size = len(data) - start
    tensors = {}
    for name, entry in sorted(header.items(), key=lambda item: item[1]['offset']):
        shape, offset, length = tuple(entry['shape']), entry['offset'], entry['length']
        if length != 4 * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"tensor '{name}': {length} bytes cannot hold float32 shape {shape}")
        if offset < 0 or offset + length > payload_size:
            raise CheckpointError(
                f"tensor '{name}' spans payload bytes [{offset}, {offset + length}) "
                f"(file offsets [{start + offset}, {start + offset + length})) "
                f"but the file ends at {len(data)}; truncated?")
        array = np.frombuffer(data, dtype='<f4', count=length // 4, offset=start + offset)
        tensors[name] = array.reshape(shape).astype(np.float32)
    return tensors, metadata


def write_container(path: Union[str, Path], tensors: Mapping[str, np.ndarray],
                    metadata: Optional[Mapping[str, str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_container(tensors, metadata)
    path.write_bytes(blob)
    logger.info(f"💾 Wrote {len(tensors)} tensors ({len(blob)} bytes) to {path}")
    return path


def read_container(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    return decode_container(path.read_bytes())
