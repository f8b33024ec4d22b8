"""Baseline sequential JPEG (JFIF, 4:2:0, standard Huffman tables) encoder and decoder.

Deterministic and dependency-free beyond numpy, so the ``jpeg50`` corruption
is bit-identical across platforms and library versions.
"""

from __future__ import annotations

import struct

import numpy as np

LUMA_QUANT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
]).reshape(8, 8)

CHROMA_QUANT = np.full((8, 8), 99)
CHROMA_QUANT[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]


def _zigzag() -> np.ndarray:
    order = sorted(((i, j) for i in range(8) for j in range(8)),
                   key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    return np.array([i * 8 + j for i, j in order])


ZIGZAG = _zigzag()

_AC_SYMBOLS = [0x00, 0xF0] + [(r << 4) | s for r in range(16) for s in range(1, 11)]


def _ac_values(head: list[int]) -> list[int]:
    # the standard tables list a frequency-ordered head, then every other symbol ascending
    return head + sorted(set(_AC_SYMBOLS) - set(head))


DC_LUMA = ([0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0], list(range(12)))
DC_CHROMA = ([0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0], list(range(12)))
AC_LUMA = ([0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D], _ac_values([
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
    0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52,
    0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16]))
AC_CHROMA = ([0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77], _ac_values([
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61,
    0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33,
    0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1]))


def _dct_matrix() -> np.ndarray:
    k = np.arange(8)
    c = np.cos((2 * k[None, :] + 1) * k[:, None] * np.pi / 16) * np.sqrt(2 / 8)
    c[0] /= np.sqrt(2)
    return c


DCT = _dct_matrix()


def scaled_quant(table: np.ndarray, quality: int) -> np.ndarray:
    """Standard quality scaling of a base table (quality 50 returns the table itself)."""
    if not 1 <= quality <= 100:
        raise ValueError("quality must be in [1, 100]")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((table * scale + 50) // 100, 1, 255).astype(np.int64)


def _codes(spec) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length) from a (bits, values) table."""
    bits, values = spec
    out, code, k = {}, 0, 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            out[values[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return out


def _category(v: int) -> int:
    return int(abs(v)).bit_length()


def _amplitude_bits(v: int, size: int) -> int:
    return v if v >= 0 else v + (1 << size) - 1


class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.n = 0

    def write(self, code: int, length: int) -> None:
        self.acc = (self.acc << length) | code
        self.n += length
        while self.n >= 8:
            self.n -= 8
            byte = (self.acc >> self.n) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self.acc &= (1 << self.n) - 1

    def flush(self) -> bytes:
        if self.n:
            self.write((1 << (8 - self.n)) - 1, 8 - self.n)
        return bytes(self.out)


def _rgb_to_ycc(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def _ycc_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _quantized_blocks(plane: np.ndarray, q: np.ndarray) -> np.ndarray:
    b = _blocks(plane - 128.0)
    coef = DCT @ b @ DCT.T
    return np.round(coef / q).astype(np.int64)


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", 0xFF00 | marker, len(payload) + 2) + payload


def encode(image: np.ndarray, quality: int = 50) -> bytes:
    """Encode an ``H x W x 3`` uint8 image as a baseline 4:2:0 JFIF byte string."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("encode expects an H x W x 3 uint8 array")
    h, w = img.shape[:2]
    ph, pw = -h % 16, -w % 16
    padded = np.pad(img.astype(np.float64), ((0, ph), (0, pw), (0, 0)), mode="edge")
    ycc = _rgb_to_ycc(padded)
    H, W = padded.shape[:2]
    sub = ycc[..., 1:].reshape(H // 2, 2, W // 2, 2, 2).mean(axis=(1, 3))
    ql, qc = scaled_quant(LUMA_QUANT, quality), scaled_quant(CHROMA_QUANT, quality)
    yb = _quantized_blocks(ycc[..., 0], ql)
    cbb = _quantized_blocks(sub[..., 0], qc)
    crb = _quantized_blocks(sub[..., 1], qc)

    tables = {"dc": (_codes(DC_LUMA), _codes(DC_CHROMA)), "ac": (_codes(AC_LUMA), _codes(AC_CHROMA))}
    bw = _BitWriter()
    pred = [0, 0, 0]

    def put_block(block: np.ndarray, comp: int) -> None:
        t = 0 if comp == 0 else 1
        dc_codes, ac_codes = tables["dc"][t], tables["ac"][t]
        zz = block.reshape(-1)[ZIGZAG]
        diff = int(zz[0]) - pred[comp]
        pred[comp] = int(zz[0])
        size = _category(diff)
        bw.write(*dc_codes[size])
        if size:
            bw.write(_amplitude_bits(diff, size), size)
        run = 0
        for v in zz[1:]:
            v = int(v)
            if v == 0:
                run += 1
                continue
            while run > 15:
                bw.write(*ac_codes[0xF0])
                run -= 16
            size = _category(v)
            bw.write(*ac_codes[(run << 4) | size])
            bw.write(_amplitude_bits(v, size), size)
            run = 0
        if run:
            bw.write(*ac_codes[0x00])

    for my in range(H // 16):
        for mx in range(W // 16):
            for dy in range(2):
                for dx in range(2):
                    put_block(yb[2 * my + dy, 2 * mx + dx], 0)
            put_block(cbb[my, mx], 1)
            put_block(crb[my, mx], 2)

    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    out += _segment(0xDB, bytes([0]) + bytes(ql.reshape(-1)[ZIGZAG].tolist())
                    + bytes([1]) + bytes(qc.reshape(-1)[ZIGZAG].tolist()))
    out += _segment(0xC0, struct.pack(">BHHB", 8, h, w, 3) + bytes([1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]))
    dht = b""
    for tc, spec in ((0x00, DC_LUMA), (0x10, AC_LUMA), (0x01, DC_CHROMA), (0x11, AC_CHROMA)):
        dht += bytes([tc]) + bytes(spec[0]) + bytes(spec[1])
    out += _segment(0xC4, dht)
    out += _segment(0xDA, bytes([3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]))
    out += bw.flush()
    out += b"\xff\xd9"
    return bytes(out)


class _BitReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.acc = 0
        self.n = 0

    def bit(self) -> int:
        if self.n == 0:
            byte = self.data[self.pos]
            self.pos += 1
            if byte == 0xFF:
                if self.data[self.pos] != 0x00:
                    raise ValueError("unexpected marker inside entropy-coded data")
                self.pos += 1
            self.acc, self.n = byte, 8
        self.n -= 1
        return (self.acc >> self.n) & 1

    def bits(self, k: int) -> int:
        v = 0
        for _ in range(k):
            v = (v << 1) | self.bit()
        return v

    def symbol(self, lookup: dict) -> int:
        code, length = 0, 0
        while length < 16:
            code = (code << 1) | self.bit()
            length += 1
            sym = lookup.get((code, length))
            if sym is not None:
                return sym
        raise ValueError("invalid Huffman code")


def _extend(v: int, size: int) -> int:
    return v if size == 0 or v >= (1 << (size - 1)) else v - (1 << size) + 1


def decode(data: bytes) -> np.ndarray:
    """Decode a baseline JFIF stream of the layout written by :func:`encode`."""
    if data[:2] != b"\xff\xd8":
        raise ValueError("missing SOI marker")
    pos = 2
    quant: dict[int, np.ndarray] = {}
    huff: dict[int, dict] = {}
    comps = []
    h = w = 0
    while True:
        marker = data[pos + 1]
        length = struct.unpack(">H", data[pos + 2:pos + 4])[0]
        seg = data[pos + 4:pos + 2 + length]
        pos += 2 + length
        if marker == 0xDB:
            j = 0
            while j < len(seg):
                table = np.zeros(64, dtype=np.int64)
                table[ZIGZAG] = list(seg[j + 1:j + 65])
                quant[seg[j] & 0x0F] = table.reshape(8, 8)
                j += 65
        elif marker == 0xC0:
            _, h, w, nc = struct.unpack(">BHHB", seg[:6])
            comps = [(seg[6 + 3 * k], seg[7 + 3 * k], seg[8 + 3 * k]) for k in range(nc)]
        elif marker == 0xC4:
            j = 0
            while j < len(seg):
                tc = seg[j]
                bits = list(seg[j + 1:j + 17])
                n = sum(bits)
                vals = list(seg[j + 17:j + 17 + n])
                huff[tc] = {v: k for k, v in _codes((bits, vals)).items()}
                j += 17 + n
        elif marker == 0xDA:
            break
        elif marker in (0xC1, 0xC2, 0xC3):
            raise ValueError("only baseline sequential JPEG is supported")
    if [c[1] for c in comps] != [0x22, 0x11, 0x11]:
        raise ValueError("only 4:2:0 three-component streams are supported")
    reader = _BitReader(data[pos:])
    H, W = h + (-h % 16), w + (-w % 16)
    planes = [np.zeros((H, W)), np.zeros((H // 2, W // 2)), np.zeros((H // 2, W // 2))]
    pred = [0, 0, 0]

    def get_block(comp: int) -> np.ndarray:
        t = 0 if comp == 0 else 1
        size = reader.symbol(huff[0x00 | t])
        pred[comp] += _extend(reader.bits(size), size) if size else 0
        zz = np.zeros(64, dtype=np.int64)
        zz[0] = pred[comp]
        k = 1
        while k < 64:
            rs = reader.symbol(huff[0x10 | t])
            run, size = rs >> 4, rs & 0x0F
            if size == 0:
                if run == 15:
                    k += 16
                    continue
                break
            k += run
            zz[k] = _extend(reader.bits(size), size)
            k += 1
        coef = np.zeros(64)
        coef[ZIGZAG] = zz
        q = quant[comps[comp][2]]
        return DCT.T @ (coef.reshape(8, 8) * q) @ DCT + 128.0

    for my in range(H // 16):
        for mx in range(W // 16):
            for dy in range(2):
                for dx in range(2):
                    y0, x0 = 16 * my + 8 * dy, 16 * mx + 8 * dx
                    planes[0][y0:y0 + 8, x0:x0 + 8] = get_block(0)
            for c in (1, 2):
                planes[c][8 * my:8 * my + 8, 8 * mx:8 * mx + 8] = get_block(c)
    cb = np.repeat(np.repeat(planes[1], 2, axis=0), 2, axis=1)
    cr = np.repeat(np.repeat(planes[2], 2, axis=0), 2, axis=1)
    rgb = _ycc_to_rgb(np.stack([planes[0], cb, cr], axis=-1))
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)[:h, :w]


def jpeg_roundtrip(image: np.ndarray, quality: int = 50) -> np.ndarray:
    """Encode then decode a ``[0, 1]`` float image; returns floats on the 1/255 grid."""
    u8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return decode(encode(u8, quality)).astype(np.float64) / 255.0
