"""On-disk embedding cache: ``{cache_dir}/{sha256}.bin`` = u32 dim + float32 values."""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import threading
from pathlib import Path

import numpy as np


class EmbeddingCache:
    def __init__(self, cache_dir: str | Path, namespace: str = ""):
        self.root = Path(cache_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.namespace = namespace.encode("utf-8")
        self._write_lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def path_for(self, request: bytes) -> Path:
        digest = hashlib.sha256(self.namespace + b"\0" + request).hexdigest()
        return self.root / f"{digest}.bin"

    def get(self, request: bytes) -> np.ndarray | None:
        path = self.path_for(request)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            self.misses += 1
            return None
        (dim,) = struct.unpack_from("<I", data, 0)
        if len(data) != 4 + 4 * dim:
            # torn or foreign file; treat as a miss and let put() overwrite it
            self.misses += 1
            return None
        self.hits += 1
        return np.frombuffer(data, dtype="<f4", offset=4).astype(np.float32)

    def put(self, request: bytes, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype="<f4")
        payload = struct.pack("<I", vector.shape[0]) + vector.tobytes()
        path = self.path_for(request)
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
