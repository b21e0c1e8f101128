"""Deterministic simulation of the single-master multi-drop servo fieldbus.

Wire format (documented bit-exactly in docs/BUS_PROTOCOL.md):

    sync 0xAA | node id | opcode | length | payload (<= 40 B) | CRC-16 hi | lo

CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over id+opcode+payload. The
budget check uses raw payload bits (bytes x 8); the serialized timeline uses
10 bits per byte (UART 8N1) plus a 12 bit-time inter-frame gap, all in exact
integer arithmetic. Half-duplex: command and reply share the line.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

SYNC_BYTE = 0xAA
MAX_PAYLOAD = 40
HEADER_LEN = 4          # sync, id, opcode, length
CRC_LEN = 2
MAX_FRAME = HEADER_LEN + MAX_PAYLOAD + CRC_LEN   # 46 <= 48 B envelope
UART_BITS_PER_BYTE = 10
INTERFRAME_GAP_BITS = 12


class Opcode(IntEnum):
    COMMAND = 0x01
    STATE = 0x02
    CONFIG = 0x03
    FIRMWARE = 0x04     # reserved: update flows are out of scope


class CrcError(ValueError):
    """Frame failed its CRC check."""


class MalformedError(ValueError):
    """Frame truncated, bad sync, or trailing bytes."""


class BudgetError(ValueError):
    """Schedule does not fit the line budget."""


def crc16_ccitt(data: bytes, init: int = 0xFFFF) -> int:
    crc = init
    for b in data:
        crc ^= b << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
    return crc


@dataclass(frozen=True)
class Frame:
    node_id: int
    opcode: Opcode
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.node_id <= 7:
            raise ValueError("node id must be 0..7")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload exceeds {MAX_PAYLOAD} bytes")


def encode_frame(frame: Frame) -> bytes:
    body = bytes([frame.node_id, int(frame.opcode), len(frame.payload)]) + frame.payload
    crc = crc16_ccitt(bytes([frame.node_id, int(frame.opcode)]) + frame.payload)
    return bytes([SYNC_BYTE]) + body + struct.pack(">H", crc)


def decode_frame(data: bytes) -> Frame:
    """Strict decode of exactly one frame; any leftover or missing bytes is
    malformed, so every single-bit corruption is detectable."""
    if len(data) < HEADER_LEN + CRC_LEN:
        raise MalformedError(f"frame too short ({len(data)} bytes)")
    if data[0] != SYNC_BYTE:
        raise MalformedError(f"bad sync byte 0x{data[0]:02X}")
    node_id, opcode, length = data[1], data[2], data[3]
    expected = HEADER_LEN + length + CRC_LEN
    if len(data) != expected:
        raise MalformedError(f"length field {length} does not match {len(data)} bytes")
    payload = data[4 : 4 + length]
    (crc_rx,) = struct.unpack(">H", data[4 + length :])
    crc = crc16_ccitt(bytes([node_id, opcode]) + payload)
    if crc != crc_rx:
        raise CrcError(f"crc mismatch: got 0x{crc_rx:04X}, want 0x{crc:04X}")
    if node_id > 7:
        raise MalformedError(f"node id {node_id} out of range")
    try:
        op = Opcode(opcode)
    except ValueError as e:
        raise MalformedError(f"unknown opcode 0x{opcode:02X}") from e
    return Frame(node_id=node_id, opcode=op, payload=payload)


# servo payloads: command carries a target current; the reply mirrors the
# co-located sensor set (position, current, temperature, 3-axis accel)

ENCODER_TICKS = 1 << 14     # 14-bit on-axis magnetic encoder


def pack_command(current_a: float) -> bytes:
    ma = int(round(np.clip(current_a, -32.767, 32.767) * 1000.0))
    return struct.pack(">h", ma)


def unpack_command(payload: bytes) -> float:
    (ma,) = struct.unpack(">h", payload)
    return ma / 1000.0


def pack_state(theta_m: float, current_a: float, temp_c: float,
               accel: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> bytes:
    ticks = int(round(theta_m / (2.0 * math.pi) * ENCODER_TICKS))
    ma = int(round(np.clip(current_a, -32.767, 32.767) * 1000.0))
    dc = int(round(np.clip(temp_c, -3276.7, 3276.7) * 10.0))
    ac = [int(round(np.clip(a, -16.0, 16.0) * 2048.0)) for a in accel]
    return struct.pack(">ihh3h", ticks, ma, dc, *ac)


def unpack_state(payload: bytes) -> dict:
    ticks, ma, dc, ax, ay, az = struct.unpack(">ihh3h", payload)
    return {
        "theta_m": ticks * 2.0 * math.pi / ENCODER_TICKS,
        "current": ma / 1000.0,
        "temp": dc / 10.0,
        "accel": (ax / 2048.0, ay / 2048.0, az / 2048.0),
    }


@dataclass(frozen=True)
class BusSchedule:
    node_ids: tuple[int, ...]
    command_bytes: int
    reply_bytes: int
    line_rate: int = 1_000_000
    cycle_rate: int = 170
    interframe_gap_bits: int = INTERFRAME_GAP_BITS

    def budget_bits_per_cycle(self) -> int:
        """Raw payload bits per cycle (exact integers)."""
        return len(self.node_ids) * (self.command_bytes + self.reply_bytes) * 8

    def capacity_bits_per_cycle(self) -> int:
        return self.line_rate // self.cycle_rate

    def check_budget(self) -> None:
        used = self.budget_bits_per_cycle()
        cap = self.capacity_bits_per_cycle()
        if used > cap:
            raise BudgetError(
                f"{used} bits/cycle exceeds {cap} bits/cycle "
                f"({used * self.cycle_rate} > {self.line_rate} bit/s)"
            )


@dataclass(frozen=True)
class SlotTiming:
    node_id: int
    tx_start_bits: int
    tx_end_bits: int
    rx_start_bits: int
    rx_end_bits: int

    def us(self, line_rate: int) -> tuple[float, float, float, float]:
        f = 1e6 / line_rate
        return (self.tx_start_bits * f, self.tx_end_bits * f,
                self.rx_start_bits * f, self.rx_end_bits * f)


def schedule_cycle(schedule: BusSchedule) -> list[SlotTiming]:
    """Serialized half-duplex timeline for one cycle, in integer bit times.

    Raises BudgetError before any transmission if the cycle cannot fit.
    """
    schedule.check_budget()
    gap = schedule.interframe_gap_bits
    cmd_bits = schedule.command_bytes * UART_BITS_PER_BYTE
    rep_bits = schedule.reply_bytes * UART_BITS_PER_BYTE
    t = 0
    slots = []
    for nid in schedule.node_ids:
        tx0, tx1 = t, t + cmd_bits
        rx0, rx1 = tx1 + gap, tx1 + gap + rep_bits
        slots.append(SlotTiming(nid, tx0, tx1, rx0, rx1))
        t = rx1 + gap
    if t > schedule.capacity_bits_per_cycle():
        raise BudgetError(
            f"serialized cycle spans {t} bit times, over the "
            f"{schedule.capacity_bits_per_cycle()} available per cycle"
        )
    return slots


class FaultInjector:
    """Deterministic per-frame fault decisions, seeded and order-independent.

    kind: 'drop', 'corrupt' or 'delay'; `rate` in [0, 1]. Decisions hash
    (seed, cycle, node, direction), so identical seeds give byte-identical
    timelines regardless of evaluation order.
    """

    DIRECTIONS = {"command": 0, "reply": 1}

    def __init__(self, kind: str = "drop", rate: float = 0.0, seed: int = 0,
                 node_filter: set[int] | None = None, delay_us: float = 0.0):
        if kind not in ("drop", "corrupt", "delay"):
            raise ValueError(f"unknown fault kind {kind!r}")
        if not 0.0 <= rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")
        self.kind = kind
        self.rate = rate
        self.seed = seed
        self.node_filter = node_filter
        self.delay_us = delay_us

    def _rng(self, cycle: int, node: int, direction: str) -> np.random.Generator:
        return np.random.default_rng(
            (self.seed, 0xB05, cycle, node, self.DIRECTIONS[direction])
        )

    def apply(self, data: bytes, cycle: int, node: int, direction: str) -> bytes | None:
        """Returns the (possibly corrupted) bytes, or None for a drop."""
        if self.rate == 0.0:
            return data
        if self.node_filter is not None and node not in self.node_filter:
            return data
        rng = self._rng(cycle, node, direction)
        if rng.random() >= self.rate:
            return data
        if self.kind == "drop":
            return None
        if self.kind == "corrupt":
            bit = int(rng.integers(0, len(data) * 8))
            b = bytearray(data)
            b[bit // 8] ^= 1 << (bit % 8)
            return bytes(b)
        return data  # 'delay' affects timing, not content

    def delay(self, cycle: int, node: int, direction: str) -> float:
        if self.kind != "delay" or self.rate == 0.0:
            return 0.0
        rng = self._rng(cycle, node, direction)
        return self.delay_us if rng.random() < self.rate else 0.0


@dataclass
class ServoNode:
    """Drive-board behavior: track the last good command; when commands stop
    arriving, hold it with an exponential torque decay (safe for a compliant
    arm: no gravity-drop transient)."""

    node_id: int
    decay_tau: float = 0.05     # s
    last_current: float = 0.0
    time_since_cmd: float = 0.0
    missed: int = 0

    def deliver(self, current_a: float) -> None:
        self.last_current = current_a
        self.time_since_cmd = 0.0

    def miss(self, period: float) -> None:
        self.time_since_cmd += period
        self.missed += 1

    @property
    def effective_current(self) -> float:
        if self.time_since_cmd <= 0.0:
            return self.last_current
        return self.last_current * math.exp(-self.time_since_cmd / self.decay_tau)


class BusMaster:
    """One command/reply exchange per node per cycle, with fault injection.

    Exchange results feed the control loop: delivered commands reach the
    servo nodes; decoded replies refresh the sensed state. Timelines are
    identical across runs with equal seeds.
    """

    def __init__(self, node_ids: list[int], line_rate: int = 1_000_000,
                 cycle_rate: int = 170, injector: FaultInjector | None = None,
                 decay_tau: float = 0.05, gap_bits: int = INTERFRAME_GAP_BITS):
        cmd_len = HEADER_LEN + len(pack_command(0.0)) + CRC_LEN
        rep_len = HEADER_LEN + len(pack_state(0.0, 0.0, 27.0)) + CRC_LEN
        self.schedule = BusSchedule(
            node_ids=tuple(node_ids), command_bytes=cmd_len, reply_bytes=rep_len,
            line_rate=line_rate, cycle_rate=cycle_rate, interframe_gap_bits=gap_bits,
        )
        self.schedule.check_budget()
        self.slots = schedule_cycle(self.schedule)
        self.nodes = {nid: ServoNode(nid, decay_tau=decay_tau) for nid in node_ids}
        self.injector = injector or FaultInjector(rate=0.0)
        self.cycle_index = 0
        self.stats = {"tx": 0, "rx": 0, "cmd_lost": 0, "reply_lost": 0, "crc_errors": 0}

    def exchange(self, currents: dict[int, float],
                 sensors: dict[int, dict]) -> dict[int, dict | None]:
        """Send commands, collect replies. `sensors[node]` holds the true
        values the node would report. Returns decoded replies (None = lost)."""
        period = 1.0 / self.schedule.cycle_rate
        replies: dict[int, dict | None] = {}
        for nid in self.schedule.node_ids:
            node = self.nodes[nid]
            wire = encode_frame(Frame(nid, Opcode.COMMAND, pack_command(currents[nid])))
            self.stats["tx"] += 1
            arrived = self.injector.apply(wire, self.cycle_index, nid, "command")
            ok = False
            if arrived is not None:
                try:
                    f = decode_frame(arrived)
                    node.deliver(unpack_command(f.payload))
                    ok = True
                except (CrcError, MalformedError):
                    self.stats["crc_errors"] += 1
            if not ok:
                node.miss(period)
                self.stats["cmd_lost"] += 1

            s = sensors[nid]
            rep = encode_frame(Frame(nid, Opcode.STATE,
                                     pack_state(s["theta_m"], s["current"], s["temp"])))
            back = self.injector.apply(rep, self.cycle_index, nid, "reply")
            decoded: dict | None = None
            if back is not None:
                try:
                    decoded = unpack_state(decode_frame(back).payload)
                    self.stats["rx"] += 1
                except (CrcError, MalformedError):
                    self.stats["crc_errors"] += 1
            if decoded is None:
                self.stats["reply_lost"] += 1
            replies[nid] = decoded
        self.cycle_index += 1
        return replies

    def effective_current(self, node_id: int) -> float:
        return self.nodes[node_id].effective_current
