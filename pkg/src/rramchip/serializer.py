"""Two-stage output serializer, 26-bit packet codec and host-side receiver.

Packet layout (bit 25 is the MSB)::

    [25:14] adc_code   [13:9] gain_sel (one-hot)   [8:5] col_in_set   [4:0] status

Status bits: 4 valid, 3 saturated_high, 2 saturated_low, 1:0 sequence.

A frame holds 32 data packets (one per set) and two control packets:
slot 32 is the header, slot 33 carries the register checksum and a 10-bit
check over the whole frame. Packets leave the chip two bits per cycle,
most significant pair first.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EncodingError, FramingError, IntegrityError

PACKET_BITS = 26
LANE_BITS = 2
PAIRS_PER_PACKET = PACKET_BITS // LANE_BITS
N_DATA_PACKETS = 32
N_PACKETS = N_DATA_PACKETS + 2
HEADER_SLOT = 32
CHECKSUM_SLOT = 33
FRAME_CYCLES = 1 + N_PACKETS * PAIRS_PER_PACKET
PACKET_MASK = (1 << PACKET_BITS) - 1

STATUS_VALID = 0x10
STATUS_SAT_HIGH = 0x08
STATUS_SAT_LOW = 0x04
STATUS_SEQ_MASK = 0x03

_FIELDS = (("adc_code", 14, 12), ("gain_sel", 9, 5), ("col_in_set", 5, 4), ("status", 0, 5))


@dataclass(frozen=True)
class DataPacket:
    adc_code: int = 0
    gain_sel: int = 0
    col_in_set: int = 0
    status: int = 0

    @property
    def valid(self) -> bool:
        return bool(self.status & STATUS_VALID)

    @property
    def saturated_high(self) -> bool:
        return bool(self.status & STATUS_SAT_HIGH)

    @property
    def saturated_low(self) -> bool:
        return bool(self.status & STATUS_SAT_LOW)

    @property
    def sequence(self) -> int:
        return self.status & STATUS_SEQ_MASK

    def pack(self) -> int:
        return pack_packet(self.adc_code, self.gain_sel, self.col_in_set, self.status)


def pack_packet(adc_code: int, gain_sel: int, col_in_set: int, status: int) -> int:
    word = 0
    for (name, shift, width), value in zip(_FIELDS, (adc_code, gain_sel, col_in_set, status)):
        if not 0 <= value < 1 << width:
            raise EncodingError(f"{name}={value} does not fit in {width} bits")
        word |= value << shift
    return word


def unpack_packet(word: int) -> DataPacket:
    if not 0 <= word <= PACKET_MASK:
        raise EncodingError(f"packet word {word:#x} wider than {PACKET_BITS} bits")
    return DataPacket(*((word >> shift) & ((1 << width) - 1) for _, shift, width in _FIELDS))


def status_bits(valid: bool, saturated_high: bool, saturated_low: bool, sequence: int) -> int:
    return ((STATUS_VALID if valid else 0) | (STATUS_SAT_HIGH if saturated_high else 0)
            | (STATUS_SAT_LOW if saturated_low else 0) | (sequence & STATUS_SEQ_MASK))


# -- control packets -------------------------------------------------------

def header_word(frame_counter: int, op_mode: int, busy: bool, done: bool, n_valid: int) -> int:
    """Slot 32: [25:10] frame counter, [9:8] op mode, [7] busy, [6] done, [5:0] valid count."""
    return (((frame_counter & 0xFFFF) << 10) | ((op_mode & 0x3) << 8)
            | (int(busy) << 7) | (int(done) << 6) | (n_valid & 0x3F))


def _fold10(x: int) -> int:
    return (x ^ (x >> 10) ^ (x >> 20)) & 0x3FF


def frame_check(words) -> int:
    """10-bit check over all 34 words, with the check field itself zeroed."""
    acc = 0
    for i, w in enumerate(words):
        acc ^= (w & ~0x3FF) if i == CHECKSUM_SLOT else w
    return _fold10(acc)


@dataclass(frozen=True)
class Frame:
    entries: tuple[int, ...]

    def __post_init__(self):
        if len(self.entries) != N_PACKETS:
            raise EncodingError(f"frame needs {N_PACKETS} entries, got {len(self.entries)}")
        if any(not 0 <= w <= PACKET_MASK for w in self.entries):
            raise EncodingError("frame entry wider than 26 bits")

    @property
    def frame_counter(self) -> int:
        return self.entries[HEADER_SLOT] >> 10

    @property
    def op_mode(self) -> int:
        return (self.entries[HEADER_SLOT] >> 8) & 0x3

    @property
    def busy(self) -> bool:
        return bool(self.entries[HEADER_SLOT] & 0x80)

    @property
    def done(self) -> bool:
        return bool(self.entries[HEADER_SLOT] & 0x40)

    @property
    def n_valid(self) -> int:
        return self.entries[HEADER_SLOT] & 0x3F

    @property
    def register_checksum(self) -> int:
        return self.entries[CHECKSUM_SLOT] >> 10

    @property
    def check(self) -> int:
        return self.entries[CHECKSUM_SLOT] & 0x3FF

    def packets(self) -> list[DataPacket]:
        return [unpack_packet(w) for w in self.entries[:N_DATA_PACKETS]]


def build_frame(data_words, frame_counter: int, register_checksum: int,
                op_mode: int = 0, busy: bool = False, done: bool = True) -> Frame:
    data_words = list(data_words)
    if len(data_words) != N_DATA_PACKETS:
        raise EncodingError(f"need {N_DATA_PACKETS} data words")
    n_valid = sum(1 for w in data_words if w & STATUS_VALID)
    words = data_words + [header_word(frame_counter, op_mode, busy, done, n_valid),
                          (register_checksum & 0xFFFF) << 10]
    words[CHECKSUM_SLOT] |= frame_check(words)
    return Frame(tuple(words))


def validate_frame(frame: Frame) -> Frame:
    if frame_check(frame.entries) != frame.check:
        raise IntegrityError(f"frame {frame.frame_counter}: control-packet check mismatch")
    packets = frame.packets()
    if sum(p.valid for p in packets) != frame.n_valid:
        raise IntegrityError(f"frame {frame.frame_counter}: header valid count disagrees with packets")
    for i, p in enumerate(packets):
        if p.valid and (p.gain_sel == 0 or p.gain_sel & (p.gain_sel - 1)):
            raise IntegrityError(f"frame {frame.frame_counter} slot {i}: gain_sel not one-hot")
    return frame


# -- lane schedule ---------------------------------------------------------

def word_to_pairs(word: int) -> list[int]:
    return [(word >> (PACKET_BITS - LANE_BITS * (k + 1))) & 0x3 for k in range(PAIRS_PER_PACKET)]


def pairs_to_word(pairs) -> int:
    word = 0
    for p in pairs:
        word = (word << LANE_BITS) | int(p)
    return word


class TwoStageSerializer:
    """Cycle-accurate two-stage serializer.

    Stage 1 is the 34-entry shift register that browses toward the next
    requested packet one entry per cycle; stage 2 is the 26-bit register that
    shifts two bits off chip per cycle. Loading stage 2 and emitting its first
    pair happen in the same cycle. The first cycle after ``load`` captures the
    set outputs into stage 1.
    """

    def __init__(self):
        self.stage1: deque[int] = deque()
        self.head = 0
        self.stage2 = 0
        self.remaining = 0
        self.targets: deque[int] = deque()
        self.captured = False
        self.cycle = 0

    def load(self, frame: Frame, targets):
        self._pending = list(frame.entries)
        self.targets = deque(targets)
        if any(not 0 <= t < N_PACKETS for t in self.targets):
            raise IndexError("packet index out of range")
        self.captured = False
        self.remaining = 0
        self.cycle = 0

    @property
    def idle(self) -> bool:
        return self.captured and not self.targets and self.remaining == 0

    def tick(self) -> int | None:
        """Advance one cycle; return the emitted 2-bit symbol, or None when the lane is idle."""
        self.cycle += 1
        if not self.captured:
            self.stage1 = deque(self._pending)
            self.head = 0
            self.captured = True
            return None

        out = None
        if self.remaining:
            self.remaining -= 1
            out = (self.stage2 >> (LANE_BITS * self.remaining)) & 0x3
        elif self.targets and self.head == self.targets[0]:
            self.targets.popleft()
            self.stage2 = self.stage1[0]
            self.remaining = PAIRS_PER_PACKET - 1
            out = (self.stage2 >> (LANE_BITS * self.remaining)) & 0x3
            return out
        if self.targets and self.head < self.targets[0]:
            self.stage1.rotate(-1)
            self.head += 1
        return out


class OneStageSerializer:
    """Reference single shift register: all 34 packets chained, two bits per cycle."""

    def __init__(self, frame: Frame):
        self.bits = 0
        for w in frame.entries:
            self.bits = (self.bits << PACKET_BITS) | w
        self.n_bits = PACKET_BITS * N_PACKETS
        self.cycle = 0

    def tick(self) -> int:
        self.cycle += 1
        self.n_bits -= LANE_BITS
        return (self.bits >> self.n_bits) & 0x3


def retrieve_packet(frame: Frame, n: int) -> tuple[list[int], int]:
    """Serialize packet ``n`` alone; returns the per-cycle lane symbols and the latency.

    Idle cycles carry symbol 0; the payload is the last 13 symbols.
    """
    if not 0 <= n < N_PACKETS:
        raise IndexError(f"packet index {n} outside 0..{N_PACKETS - 1}")
    ser = TwoStageSerializer()
    ser.load(frame, [n])
    symbols = []
    while not ser.idle:
        s = ser.tick()
        symbols.append(0 if s is None else s)
    return symbols, ser.cycle


def one_stage_latency(frame: Frame, n: int) -> int:
    """Cycles until packet ``n`` has fully left a one-stage serializer."""
    ser = OneStageSerializer(frame)
    for _ in range((n + 1) * PAIRS_PER_PACKET):
        ser.tick()
    return ser.cycle


_SHIFTS = np.arange(PACKET_BITS - LANE_BITS, -1, -LANE_BITS, dtype=np.int64)


def stream_frame(frame: Frame) -> np.ndarray:
    """Full-frame lane stream: one capture cycle, then all 34 packets back to back."""
    words = np.asarray(frame.entries, dtype=np.int64)
    out = np.zeros(FRAME_CYCLES, dtype=np.uint8)
    out[1:] = ((words[:, None] >> _SHIFTS[None, :]) & 0x3).ravel()
    return out


_WEIGHTS = (1 << _SHIFTS).astype(np.int64)


def deserialize_stream(symbols, validate: bool = True) -> Frame:
    """Rebuild one frame from its ``stream_frame`` lane symbols."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size != FRAME_CYCLES:
        raise FramingError(f"frame stream has {symbols.size} cycles, expected {FRAME_CYCLES}")
    if symbols.size and symbols.max(initial=0) > 3:
        raise FramingError("lane symbols are 2 bits")
    words = symbols[1:].reshape(N_PACKETS, PAIRS_PER_PACKET) @ _WEIGHTS
    frame = Frame(tuple(int(w) for w in words))
    return validate_frame(frame) if validate else frame


def deserialize_frames(symbols, validate: bool = True) -> list[Frame]:
    symbols = np.asarray(symbols)
    if symbols.size % FRAME_CYCLES:
        raise FramingError(f"stream of {symbols.size} cycles is not a whole number of frames")
    return [deserialize_stream(chunk, validate)
            for chunk in symbols.reshape(-1, FRAME_CYCLES)]


class FrameReceiver:
    """Incremental host receiver: feed lane symbols, get back whole validated frames."""

    def __init__(self, validate: bool = True):
        self.validate = validate
        self._pending = np.zeros(0, dtype=np.uint8)

    def feed(self, symbols) -> list[Frame]:
        buf = np.concatenate([self._pending, np.asarray(symbols, dtype=np.uint8)])
        whole = buf.size - buf.size % FRAME_CYCLES
        self._pending = buf[whole:]
        return deserialize_frames(buf[:whole], self.validate) if whole else []

    @property
    def pending(self) -> int:
        return int(self._pending.size)


# -- bitstream trace files -------------------------------------------------

TRACE_MAGIC = b"RRSB"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sBBHQQ")


@dataclass(frozen=True)
class TraceHeader:
    sub_array: int
    cycle0: int
    n_symbols: int
    version: int = TRACE_VERSION


def pack_symbols(symbols) -> bytes:
    symbols = np.asarray(symbols, dtype=np.uint8)
    padded = np.zeros(-(-symbols.size // 4) * 4, dtype=np.uint8)
    padded[: symbols.size] = symbols
    quads = padded.reshape(-1, 4)
    return (quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6)).tobytes()


def unpack_symbols(data: bytes, n_symbols: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * 4 < n_symbols:
        raise FramingError(f"trace holds {raw.size * 4} symbols, header says {n_symbols}")
    out = np.stack([(raw >> s) & 0x3 for s in (0, 2, 4, 6)], axis=1).ravel()
    return out[:n_symbols].astype(np.uint8)


def encode_trace(symbols, sub_array: int, cycle0: int = 0) -> bytes:
    symbols = np.asarray(symbols, dtype=np.uint8)
    header = _TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, sub_array, 0, cycle0, symbols.size)
    return header + pack_symbols(symbols)


def decode_trace(data: bytes) -> tuple[TraceHeader, np.ndarray]:
    if len(data) < _TRACE_HEADER.size:
        raise FramingError("trace shorter than its header")
    magic, version, sub_array, _, cycle0, n = _TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise FramingError(f"bad trace magic {magic!r}")
    if version != TRACE_VERSION:
        raise FramingError(f"unsupported trace version {version}")
    symbols = unpack_symbols(data[_TRACE_HEADER.size:], n)
    return TraceHeader(sub_array, cycle0, n, version), symbols


def write_trace(path, symbols, sub_array: int, cycle0: int = 0):
    Path(path).write_bytes(encode_trace(symbols, sub_array, cycle0))


def read_trace(path) -> tuple[TraceHeader, np.ndarray]:
    return decode_trace(Path(path).read_bytes())
