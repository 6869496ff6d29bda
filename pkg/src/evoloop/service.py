"""REST task lifecycle: create, list, inspect, stop and fetch statistics."""

from __future__ import annotations

import logging
import threading
import uuid
from contextlib import asynccontextmanager
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

from fastapi import Body, FastAPI, HTTPException

from .config import ConfigParseError, config_from_dict
from .model import validate_config
from .orchestrator import Task
from .statistics import ExportError, export_all

log = logging.getLogger(__name__)

DONE = ("finished", "stopped")


class TaskRegistry:
    """In-memory task table with a bounded worker pool.

    With ``snapshot_dir`` set, each task's statistics are rewritten under
    ``<snapshot_dir>/<id>/`` after every iteration and once more at the end.
    """

    def __init__(self, max_parallel: int = 2, snapshot_dir: Optional[Path] = None):
        self._tasks: dict[str, Task] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_parallel, thread_name_prefix="task")
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None

    def _snapshot(self, task_id: str, task: Task) -> None:
        if self.snapshot_dir is None:
            return
        try:
            export_all(task.snapshot(), self.snapshot_dir / task_id)
        except ExportError as exc:
            log.warning("snapshot for %s failed: %s", task_id, exc)

    def _run(self, task_id: str, task: Task) -> None:
        task.run()
        self._snapshot(task_id, task)

    def create(self, config) -> str:
        task_id = uuid.uuid4().hex
        task = Task(config, on_iteration=lambda t, _rec: self._snapshot(task_id, t))
        with self._lock:
            self._tasks[task_id] = task
        self._pool.submit(self._run, task_id, task)
        return task_id

    def get(self, task_id: str) -> Task:
        with self._lock:
            task = self._tasks.get(task_id)
        if task is None:
            raise KeyError(task_id)
        return task

    def items(self) -> list[tuple[str, Task]]:
        with self._lock:
            return list(self._tasks.items())

    def shutdown(self, stop_running: bool = True) -> None:
        if stop_running:
            for _, task in self.items():
                task.request_stop()
        self._pool.shutdown(wait=True)


def _summary(task_id: str, task: Task) -> dict[str, Any]:
    report = task.snapshot()
    state = task.state
    c = state.counters
    return {
        "id": task_id,
        "status": report.status,
        "reason": report.reason,
        "started_at": report.started_at,
        "counters": {
            "total": c.total,
            "valid": c.valid,
            "consecutive_invalid": c.consecutive_invalid,
            "tokens_used": c.tokens_used,
        },
        "best": report.best,
    }


def create_app(registry: Optional[TaskRegistry] = None) -> FastAPI:
    registry = registry or TaskRegistry()

    @asynccontextmanager
    async def lifespan(_app):
        yield
        registry.shutdown()

    app = FastAPI(title="evoloop", version="0.1.0", lifespan=lifespan)
    app.state.registry = registry

    def lookup(task_id: str) -> Task:
        try:
            return registry.get(task_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown task {task_id}") from None

    @app.post("/tasks", status_code=201)
    def create_task(body: Any = Body(...)):
        try:
            config = config_from_dict(body)
        except ConfigParseError as exc:
            raise HTTPException(400, detail={"errors": [str(exc)]}) from None
        violations = validate_config(config)
        if violations:
            raise HTTPException(400, detail={"errors": violations})
        return {"id": registry.create(config)}

    @app.get("/tasks")
    def list_tasks():
        return [
            {"id": tid, "status": t.state.status, "reason": t.state.reason, "iterations": t.state.counters.total}
            for tid, t in registry.items()
        ]

    @app.get("/tasks/{task_id}")
    def get_task(task_id: str):
        return _summary(task_id, lookup(task_id))

    @app.get("/tasks/{task_id}/iterations")
    def get_iterations(task_id: str):
        return lookup(task_id).snapshot().history

    @app.get("/tasks/{task_id}/statistics")
    def get_statistics(task_id: str):
        report = lookup(task_id).snapshot()
        if report.status not in DONE:
            raise HTTPException(409, detail=f"task is {report.status}; statistics are available once it ends")
        return report.to_dict()

    @app.post("/tasks/{task_id}/stop", status_code=202)
    def stop_task(task_id: str):
        task = lookup(task_id)
        task.request_stop()
        return {"id": task_id, "status": task.state.status}

    return app
