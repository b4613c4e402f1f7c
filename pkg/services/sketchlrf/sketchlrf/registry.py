import threading
import uuid
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field

from sketchlrf.config import MAX_STREAMS
from sketchlrf.dp import compose, effective_budget
from sketchlrf.stream import SketchState


class RegistryFullError(RuntimeError):
    pass


@dataclass
class Entry:
    state: SketchState
    lock: threading.Lock = field(default_factory=threading.Lock)
    releases: int = 0

    def charge(self) -> dict | None:
        """Record one more private release and return the cumulative budget"""
        if self.state.privacy is None:
            return None
        self.releases += 1
        eps0, delta0 = effective_budget(self.state.privacy)
        if self.releases == 1:
            return {"releases": 1, "epsilon": eps0, "delta": delta0}
        epsilon, delta = compose([(eps0, delta0)] * self.releases, delta0)
        return {"releases": self.releases, "epsilon": epsilon, "delta": delta}


class StateRegistry:
    """In-memory live streams; each state has a single writer guarded by its own lock"""

    def __init__(self, capacity: int = MAX_STREAMS) -> None:
        self._capacity = capacity
        self._entries: dict[str, Entry] = {}
        self._lock = threading.Lock()

    def add(self, state: SketchState) -> str:
        with self._lock:
            if len(self._entries) >= self._capacity:
                raise RegistryFullError(f"registry holds the maximum of {self._capacity} streams")
            stream_id = uuid.uuid4().hex
            self._entries[stream_id] = Entry(state)
            return stream_id

    def get(self, stream_id: str) -> Entry | None:
        with self._lock:
            return self._entries.get(stream_id)

    @contextmanager
    def locked(self, stream_id: str) -> Iterator[Entry | None]:
        entry = self.get(stream_id)
        if entry is None:
            yield None
            return
        with entry.lock:
            yield entry

    def remove(self, stream_id: str) -> bool:
        with self._lock:
            return self._entries.pop(stream_id, None) is not None

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()


registry: StateRegistry = StateRegistry()


def get_registry() -> StateRegistry:
    return registry


def close_registry() -> None:
    registry.clear()
