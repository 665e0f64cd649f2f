"""Embedded partitioned message log with consumer groups.

One process, file-backed, at-least-once. Topics are directories of
append-only segment files, one per partition; records are length-prefixed
and CRC-checked, and a torn tail is truncated on replay. Consumer groups
track a durable committed offset per partition (the next offset to read);
everything else about a group (members, assignment, session positions) is
in-memory and rebuilt by re-joining after a restart.

Record layout: [len u32][crc32 u32][key_len u32][key][value], little-endian,
where len counts everything after the len field and the CRC covers
key_len+key+value.
"""

from __future__ import annotations

import json
import os
import re
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path

_NAME_RE = re.compile(r"^[a-z0-9._-]+$")
_LEN_HDR = struct.Struct("<I")
_REC_HDR = struct.Struct("<II")  # crc32, key_len

DEFAULT_MAX_MESSAGE_BYTES = 1 << 20
DEFAULT_HEARTBEAT_TIMEOUT_S = 5.0


class BrokerError(RuntimeError):
    pass


class InvalidName(BrokerError):
    pass


class UnknownTopic(BrokerError):
    pass


class AlreadyExistsWithDifferentConfig(BrokerError):
    pass


class MessageTooLarge(BrokerError):
    pass


class UnknownGroup(BrokerError):
    pass


class UnknownMember(BrokerError):
    pass


class RebalanceInProgress(BrokerError):
    """Retryable: the member's assignment changed; poll again."""


class OffsetBeyondEnd(BrokerError):
    pass


@dataclass(frozen=True)
class Message:
    key: bytes
    value: bytes
    offset: int
    partition: int
    timestamp: float


def partition_for(key: bytes, partition_count: int) -> int:
    """Stable cross-platform key -> partition mapping."""
    h = int.from_bytes(blake2b(key, digest_size=8).digest(), "little")
    return h % partition_count


class _PartitionLog:
    def __init__(self, path: Path):
        self.path = path
        self.lock = threading.Lock()
        self.index: list[int] = []  # offset -> byte position
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.exists():
            path.touch()
        self._replay()
        self._fd = os.open(path, os.O_RDWR)

    def _replay(self) -> None:
        """Rebuild the offset index; truncate at the first torn/corrupt record."""
        size = self.path.stat().st_size
        good_end = 0
        with open(self.path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos + 4 <= size:
            (rec_len,) = _LEN_HDR.unpack_from(data, pos)
            if pos + 4 + rec_len > size or rec_len < 8:
                break
            crc, _key_len = _REC_HDR.unpack_from(data, pos + 4)
            body = data[pos + 8 : pos + 4 + rec_len]
            if zlib.crc32(body) != crc:
                break
            self.index.append(pos)
            pos += 4 + rec_len
            good_end = pos
        if good_end != size:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    @property
    def end_offset(self) -> int:
        return len(self.index)

    def append(self, key: bytes, value: bytes) -> int:
        body = struct.pack("<I", len(key)) + key + value
        record = _LEN_HDR.pack(4 + len(body)) + struct.pack("<I", zlib.crc32(body)) + body
        with self.lock:
            pos = os.lseek(self._fd, 0, os.SEEK_END)
            os.write(self._fd, record)
            os.fsync(self._fd)
            self.index.append(pos)
            return len(self.index) - 1

    def read(self, offset: int, max_messages: int) -> list[tuple[int, bytes, bytes]]:
        out = []
        with self.lock:
            end = len(self.index)
            positions = [(o, self.index[o]) for o in range(offset, min(end, offset + max_messages))]
        for o, pos in positions:
            hdr = os.pread(self._fd, 4, pos)
            (rec_len,) = _LEN_HDR.unpack(hdr)
            blob = os.pread(self._fd, rec_len, pos + 4)
            _crc, key_len = _REC_HDR.unpack_from(blob, 0)
            key = blob[8 : 8 + key_len]
            value = blob[8 + key_len :]
            out.append((o, key, value))
        return out

    def close(self) -> None:
        os.close(self._fd)


class _Topic:
    def __init__(self, root: Path, name: str, partition_count: int):
        self.name = name
        self.partition_count = partition_count
        self.root = root
        self.logs = [_PartitionLog(root / str(p) / "log.seg") for p in range(partition_count)]
        self.publish_times: dict[tuple[int, int], float] = {}


class _Member:
    def __init__(self, member_id: str):
        self.member_id = member_id
        self.last_heartbeat = 0.0
        self.generation = -1
        self.positions: dict[int, int] = {}


class _Group:
    def __init__(self, group_id: str, topic: str, offsets_path: Path):
        self.group_id = group_id
        self.topic = topic
        self.offsets_path = offsets_path
        self.lock = threading.RLock()
        self.members: dict[str, _Member] = {}
        self.assignment: dict[int, str] = {}
        self.generation = 0
        self.committed: dict[int, int] = {}
        if offsets_path.exists():
            raw = json.loads(offsets_path.read_text())
            self.committed = {int(k): int(v) for k, v in raw.items()}

    def persist_offsets(self) -> None:
        tmp = self.offsets_path.with_suffix(".tmp")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps({str(k): v for k, v in self.committed.items()})
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.offsets_path)

    def rebalance(self, partition_count: int) -> None:
        self.generation += 1
        self.assignment = {}
        live = sorted(self.members)
        if not live:
            return
        for p in range(partition_count):
            self.assignment[p] = live[p % len(live)]


class Broker:
    """Thread-safe embedded broker over a data directory."""

    def __init__(
        self,
        data_dir,
        max_message_bytes: int = DEFAULT_MAX_MESSAGE_BYTES,
        heartbeat_timeout_s: float = DEFAULT_HEARTBEAT_TIMEOUT_S,
        clock=time.monotonic,
    ):
        self.root = Path(data_dir) / "broker"
        self.root.mkdir(parents=True, exist_ok=True)
        self.max_message_bytes = max_message_bytes
        self.heartbeat_timeout_s = heartbeat_timeout_s
        self.clock = clock
        self._lock = threading.Lock()
        self._topics: dict[str, _Topic] = {}
        self._groups: dict[tuple[str, str], _Group] = {}
        self._data_cond = threading.Condition()
        # re-open any topics already on disk
        for meta in self.root.glob("*/meta.json"):
            cfg = json.loads(meta.read_text())
            self._topics[cfg["name"]] = _Topic(meta.parent, cfg["name"], cfg["partitions"])

    # -- topics ------------------------------------------------------------

    def create_topic(self, name: str, partitions: int) -> None:
        if not _NAME_RE.match(name):
            raise InvalidName(f"topic name {name!r} must match [a-z0-9._-]+")
        if partitions < 1:
            raise ValueError("partitions must be >= 1")
        with self._lock:
            existing = self._topics.get(name)
            if existing is not None:
                if existing.partition_count != partitions:
                    raise AlreadyExistsWithDifferentConfig(
                        f"topic {name} has {existing.partition_count} partitions, wanted {partitions}"
                    )
                return
            topic_dir = self.root / name
            topic_dir.mkdir(parents=True, exist_ok=True)
            meta = topic_dir / "meta.json"
            with open(meta, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"name": name, "partitions": partitions}))
                fh.flush()
                os.fsync(fh.fileno())
            self._topics[name] = _Topic(topic_dir, name, partitions)

    def _topic(self, name: str) -> _Topic:
        topic = self._topics.get(name)
        if topic is None:
            raise UnknownTopic(name)
        return topic

    def topic_exists(self, name: str) -> bool:
        return name in self._topics

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def end_offsets(self, topic: str) -> dict[int, int]:
        t = self._topic(topic)
        return {p: t.logs[p].end_offset for p in range(t.partition_count)}

    # -- publish -----------------------------------------------------------

    def publish(self, topic: str, key: bytes, value: bytes) -> tuple[int, int]:
        t = self._topic(topic)
        if len(value) > self.max_message_bytes:
            raise MessageTooLarge(f"{len(value)}B > {self.max_message_bytes}B cap")
        p = partition_for(key, t.partition_count)
        offset = t.logs[p].append(key, value)
        t.publish_times[(p, offset)] = self.clock()
        with self._data_cond:
            self._data_cond.notify_all()
        return (p, offset)

    # -- consumer groups ----------------------------------------------------

    def _group(self, group_id: str, topic: str, create: bool = False) -> _Group:
        key = (group_id, topic)
        with self._lock:
            g = self._groups.get(key)
            if g is None:
                offsets_path = self.root / topic / "groups" / f"{group_id}.offsets"
                if not create and not offsets_path.exists():
                    raise UnknownGroup(f"group {group_id!r} on topic {topic!r}")
                self._topic(topic)
                g = _Group(group_id, topic, offsets_path)
                self._groups[key] = g
            return g

    def join_group(self, group_id: str, topic: str, member_id: str) -> "GroupMember":
        t = self._topic(topic)
        g = self._group(group_id, topic, create=True)
        with g.lock:
            m = _Member(member_id)
            m.last_heartbeat = self.clock()
            g.members[member_id] = m
            g.rebalance(t.partition_count)
            # the joining member adopts its assignment right away; only
            # members whose assignment changed underneath them see
            # RebalanceInProgress on their next poll
            m.generation = g.generation
            m.positions = {
                p: g.committed.get(p, 0)
                for p, mid in g.assignment.items()
                if mid == member_id
            }
        return GroupMember(self, g, m)

    def _evict_expired(self, g: _Group, partition_count: int) -> None:
        now = self.clock()
        expired = [
            mid
            for mid, m in g.members.items()
            if now - m.last_heartbeat > self.heartbeat_timeout_s
        ]
        if expired:
            for mid in expired:
                del g.members[mid]
            g.rebalance(partition_count)

    def known_groups(self, topic: str) -> list[str]:
        """Groups with durable offsets or live members on this topic."""
        self._topic(topic)
        names = {gid for (gid, t) in self._groups if t == topic}
        groups_dir = self.root / topic / "groups"
        if groups_dir.exists():
            names.update(p.stem for p in groups_dir.glob("*.offsets"))
        return sorted(names)

    def lag(self, group_id: str, topic: str) -> dict[int, int]:
        t = self._topic(topic)
        g = self._group(group_id, topic, create=False)
        with g.lock:
            return {
                p: t.logs[p].end_offset - g.committed.get(p, 0)
                for p in range(t.partition_count)
            }

    def close(self) -> None:
        with self._lock:
            for t in self._topics.values():
                for log in t.logs:
                    log.close()
            self._topics.clear()
            self._groups.clear()


class GroupMember:
    """A registered group member; owns per-session read positions."""

    def __init__(self, broker: Broker, group: _Group, member: _Member):
        self._broker = broker
        self._group = group
        self._member = member

    @property
    def member_id(self) -> str:
        return self._member.member_id

    @property
    def assignment(self) -> list[int]:
        g = self._group
        with g.lock:
            return sorted(p for p, mid in g.assignment.items() if mid == self._member.member_id)

    def _sync(self) -> bool:
        """Heartbeat, evict dead members, adopt the current generation.

        Returns True when the member's assignment generation changed.
        """
        g = self._group
        t = self._broker._topic(g.topic)
        with g.lock:
            if self._member.member_id not in g.members:
                raise UnknownMember(self._member.member_id)
            self._member.last_heartbeat = self._broker.clock()
            self._broker._evict_expired(g, t.partition_count)
            if self._member.generation != g.generation:
                self._member.generation = g.generation
                self._member.positions = {
                    p: g.committed.get(p, 0)
                    for p, mid in g.assignment.items()
                    if mid == self._member.member_id
                }
                return True
            return False

    def poll(self, max_messages: int = 64, timeout_s: float = 0.0) -> list[Message]:
        if self._sync():
            raise RebalanceInProgress("assignment changed; poll again")
        g = self._group
        t = self._broker._topic(g.topic)
        deadline = time.monotonic() + timeout_s
        while True:
            out: list[Message] = []
            with g.lock:
                positions = dict(self._member.positions)
            for p, pos in sorted(positions.items()):
                if len(out) >= max_messages:
                    break
                for offset, key, value in t.logs[p].read(pos, max_messages - len(out)):
                    ts = t.publish_times.get((p, offset), 0.0)
                    out.append(Message(key=key, value=value, offset=offset, partition=p, timestamp=ts))
                    positions[p] = offset + 1
            if out:
                with g.lock:
                    if self._member.generation == g.generation:
                        self._member.positions.update(positions)
                    else:
                        return []  # rebalanced mid-read; deliver nothing stale
                return out
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return []
            with self._broker._data_cond:
                self._broker._data_cond.wait(min(remaining, 0.05))
            if self._sync():
                raise RebalanceInProgress("assignment changed; poll again")

    def commit(self, partition: int, offset: int) -> None:
        g = self._group
        t = self._broker._topic(g.topic)
        if partition < 0 or partition >= t.partition_count:
            raise ValueError(f"no such partition {partition}")
        if offset > t.logs[partition].end_offset:
            raise OffsetBeyondEnd(
                f"commit {offset} beyond end {t.logs[partition].end_offset}"
            )
        with g.lock:
            if self._member.member_id not in g.members:
                raise UnknownMember(self._member.member_id)
            if offset > g.committed.get(partition, 0):
                g.committed[partition] = offset
                g.persist_offsets()

    def leave(self) -> None:
        g = self._group
        t = self._broker._topic(g.topic)
        with g.lock:
            if self._member.member_id in g.members:
                del g.members[self._member.member_id]
                g.rebalance(t.partition_count)
