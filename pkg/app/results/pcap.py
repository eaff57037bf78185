"""
Classic libpcap trace writer (Ethernet link type).

Frames are synthesized from the simulated EthernetFrame: locally
administered MACs derived from the device index, an 802.1Q tag carrying
the frame priority, a local-experimental EtherType and the payload (the
gateway encapsulation bytes for gateway traffic, zeros otherwise) padded
to the Ethernet minimum.
"""
import struct
from dataclasses import dataclass
from pathlib import Path

from app.sim.ethernet import MIN_PAYLOAD_BYTES

PcapHeader = struct.Struct("<IHHiIII")
PcapPktHeader = struct.Struct("<IIII")

PCAP_MAGIC = 0xA1B2C3D4
SNAPLEN = 65535
LINKTYPE_ETHERNET = 1
TPID_8021Q = 0x8100
ETHERTYPE_LOCAL = 0x88B5
DEFAULT_VLAN = 1


@dataclass(frozen=True)
class Record:
    ts_sec: int
    ts_usec: int
    data: bytes

    @property
    def time_us(self) -> int:
        return self.ts_sec * 10**6 + self.ts_usec


def mac_for(index: int) -> bytes:
    return bytes([0x02, 0, 0, 0, (index >> 8) & 0xFF, index & 0xFF])


def frame_bytes(frame, addresses: dict[str, int]) -> bytes:
    """Wire image of an EthernetFrame without preamble and FCS"""
    tci = (frame.priority << 13) | DEFAULT_VLAN
    header = (mac_for(addresses.get(frame.dst, 0xFFFF)) + mac_for(addresses.get(frame.src, 0xFFFF))
              + struct.pack(">HHH", TPID_8021Q, tci, ETHERTYPE_LOCAL))
    payload = frame.payload if frame.payload else bytes(frame.payload_len)
    return header + payload.ljust(MIN_PAYLOAD_BYTES, b"\x00")


def timestamp(t_ps: int) -> tuple[int, int]:
    return t_ps // 10**12, (t_ps // 10**6) % 10**6


def write_pcap(trace: list[tuple[int, bytes]], path) -> Path:
    """Write (SimTime ps, frame bytes) records in capture order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as stream:
        stream.write(PcapHeader.pack(PCAP_MAGIC, 2, 4, 0, 0, SNAPLEN, LINKTYPE_ETHERNET))
        for t_ps, data in trace:
            ts_sec, ts_usec = timestamp(t_ps)
            captured = data[:SNAPLEN]
            stream.write(PcapPktHeader.pack(ts_sec, ts_usec, len(captured), len(data)))
            stream.write(captured)
    return path


def read_pcap(path) -> list[Record]:
    raw = Path(path).read_bytes()
    if len(raw) < PcapHeader.size:
        raise ValueError(f"{path}: truncated pcap header")
    magic, major, minor, _, _, _, linktype = PcapHeader.unpack_from(raw)
    if magic != PCAP_MAGIC or (major, minor) != (2, 4) or linktype != LINKTYPE_ETHERNET:
        raise ValueError(f"{path}: not a classic little-endian Ethernet pcap")
    records = []
    cursor = PcapHeader.size
    while cursor < len(raw):
        if cursor + PcapPktHeader.size > len(raw):
            raise ValueError(f"{path}: truncated record header at byte {cursor}")
        ts_sec, ts_usec, incl_len, _ = PcapPktHeader.unpack_from(raw, cursor)
        cursor += PcapPktHeader.size
        records.append(Record(ts_sec, ts_usec, raw[cursor:cursor + incl_len]))
        cursor += incl_len
    return records
