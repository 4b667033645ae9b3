import queue
import threading
from typing import Generic, Iterable, Iterator, Optional, TypeVar

from crackSeg.config import config

ItemT = TypeVar("ItemT")

_DONE = object()


class _Failure:
    def __init__(self, error: BaseException):
        self.error = error


class BatchPrefetcher(Generic[ItemT]):
    """
    Runs a batch stream on a background thread, `depth` items ahead of the consumer.

    Items come out in exactly the order the stream produces them; an exception raised by the
    stream is re-raised in the consumer. Closing (or abandoning the loop) stops the producer.
    """

    def __init__(self, stream: Iterable[ItemT], depth: int = config.PREFETCH_DEPTH):
        self.stream = stream
        self.depth = max(1, depth)
        self._queue: "queue.Queue" = queue.Queue(maxsize=self.depth)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for item in self.stream:
                if not self._put(item):
                    return
        except BaseException as e:
            config.logger.error(f"Batch producer failed: {e}")
            self._put(_Failure(e))
            return
        self._put(_DONE)

    def __iter__(self) -> Iterator[ItemT]:
        if self._thread is not None:
            raise RuntimeError("A BatchPrefetcher can only be iterated once.")
        self._thread = threading.Thread(target=self._produce, name="crackseg-prefetch", daemon=True)
        self._thread.start()
        config.logger.debug(f"Prefetch thread started (depth {self.depth}).")
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    return
                if isinstance(item, _Failure):
                    raise item.error
                yield item
        finally:
            self.close()

    def close(self) -> None:
        """Stop the producer and wait for it to exit."""
        self._stop.set()
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=5.0)
            if self._thread.is_alive():
                config.logger.warning("Prefetch thread did not stop; it will finish on its own.")
