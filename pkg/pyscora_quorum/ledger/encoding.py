from typing import Any, List, Tuple
from ..utils import EncodingError

# tag (1 byte) | body length (4 bytes, big endian) | body
_BYTES = b'b'
_STR = b's'
_INT = b'i'
_LIST = b'l'
_NONE = b'n'
_HEADER = 5


def _frame(tag: bytes, body: bytes) -> bytes:
    return tag + len(body).to_bytes(4, 'big') + body


def encode(value: Any) -> bytes:
    """Canonical encoding of bytes, str, int, None and (nested) lists.

    Objects exposing `to_wire()` are encoded through their wire form.
    """

    if hasattr(value, 'to_wire'):
        return encode(value.to_wire())
    if isinstance(value, bool):
        raise EncodingError('Booleans have no canonical encoding.')
    if isinstance(value, (bytes, bytearray)):
        return _frame(_BYTES, bytes(value))
    if isinstance(value, str):
        return _frame(_STR, value.encode('utf-8'))
    if isinstance(value, int):
        return _frame(_INT, str(value).encode('ascii'))
    if value == None:
        return _frame(_NONE, b'')
    if isinstance(value, (list, tuple)):
        return _frame(_LIST, b''.join(encode(item) for item in value))

    raise EncodingError(f'No canonical encoding for {type(value).__name__}.')


def _decode_at(data: bytes, offset: int) -> Tuple[Any, int]:
    if offset + _HEADER > len(data):
        raise EncodingError(f'Truncated header at offset {offset}.')

    tag = data[offset : offset + 1]
    size = int.from_bytes(data[offset + 1 : offset + _HEADER], 'big')
    start = offset + _HEADER
    end = start + size
    if end > len(data):
        raise EncodingError(f'Truncated body at offset {offset}.')

    body = data[start:end]

    if tag == _BYTES:
        return body, end
    if tag == _STR:
        try:
            return body.decode('utf-8'), end
        except UnicodeDecodeError as err:
            raise EncodingError(f'Invalid utf-8 at offset {offset}.') from err
    if tag == _INT:
        try:
            return int(body.decode('ascii')), end
        except (UnicodeDecodeError, ValueError) as err:
            raise EncodingError(f'Invalid integer at offset {offset}.') from err
    if tag == _NONE:
        if size:
            raise EncodingError(f'Non-empty None at offset {offset}.')
        return None, end
    if tag == _LIST:
        items: List[Any] = []
        cursor = start
        while cursor < end:
            item, cursor = _decode_at(data[:end], cursor)
            items.append(item)
        return items, end

    raise EncodingError(f'Unknown tag {tag!r} at offset {offset}.')


def decode(data: bytes) -> Any:
    """Inverse of `encode`; wire objects come back as nested lists.

    Raises:
        EncodingError: If `data` is not exactly one canonical value.
    """

    if not isinstance(data, (bytes, bytearray)):
        raise EncodingError(f'Expected bytes, got {type(data).__name__}.')

    value, end = _decode_at(bytes(data), 0)
    if end != len(data):
        raise EncodingError(f'{len(data) - end} trailing bytes.')

    return value
