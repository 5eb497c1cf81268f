"""Embedded transactional session store (sqlite) with per-session write locks."""

from __future__ import annotations

import json
import sqlite3
import threading
from collections import defaultdict
from contextlib import contextmanager


class SessionStore:
    def __init__(self, path: str = ":memory:"):
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._db_lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        with self._db_lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS sessions (id TEXT PRIMARY KEY, body TEXT NOT NULL)"
            )
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS events ("
                " seq INTEGER PRIMARY KEY AUTOINCREMENT,"
                " session_id TEXT NOT NULL, body TEXT NOT NULL)"
            )
            self._conn.commit()

    @contextmanager
    def lock(self, session_id: str):
        """Serializes all writes for one session (per-session ordering)."""
        with self._session_locks[session_id]:
            yield

    def put(self, session_id: str, body: dict) -> None:
        with self._db_lock:
            self._conn.execute(
                "INSERT INTO sessions (id, body) VALUES (?, ?)"
                " ON CONFLICT(id) DO UPDATE SET body = excluded.body",
                (session_id, json.dumps(body, sort_keys=True)),
            )
            self._conn.commit()

    def get(self, session_id: str) -> dict | None:
        with self._db_lock:
            row = self._conn.execute(
                "SELECT body FROM sessions WHERE id = ?", (session_id,)
            ).fetchone()
        return json.loads(row[0]) if row else None

    def append_event(self, session_id: str, body: dict) -> None:
        with self._db_lock:
            self._conn.execute(
                "INSERT INTO events (session_id, body) VALUES (?, ?)",
                (session_id, json.dumps(body, sort_keys=True)),
            )
            self._conn.commit()

    def all_sessions(self) -> list[dict]:
        with self._db_lock:
            rows = self._conn.execute("SELECT body FROM sessions ORDER BY id").fetchall()
        return [json.loads(r[0]) for r in rows]
