"""Subprocess adapter protocol.

A request is one observation container (JSON header line + binary planes)
written to the child's stdin, with `role` and `instruction` fields in the
header; the response is a container of the same format on stdout. A nonzero
exit status is an adapter failure. This lets a real image-editing model be
attached as an external process without code changes; the remaining adapter
roles keep in-process interfaces since their outputs are not observations.
"""

from __future__ import annotations

import subprocess

from .cameras import SceneObservation
from .cloud_io import observation_from_bytes, observation_to_bytes
from .goal_synthesis import ImageEditorAdapter


class AdapterError(Exception):
    """External adapter process failed or returned an invalid container."""


class SubprocessImageEditor(ImageEditorAdapter):
    """Runs an external command per imagine() call."""

    def __init__(self, command: list[str], timeout: float = 120.0):
        self.command = list(command)
        self.timeout = timeout

    def imagine(self, obs: SceneObservation, instruction: str) -> SceneObservation:
        payload = observation_to_bytes(obs, extra={"role": "imagine", "instruction": instruction})
        try:
            proc = subprocess.run(
                self.command, input=payload, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise AdapterError(f"adapter process failed to run: {e}") from e
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace").strip().splitlines()
            raise AdapterError(
                f"adapter exited with status {proc.returncode}"
                + (f": {tail[-1]}" if tail else "")
            )
        try:
            out, _ = observation_from_bytes(proc.stdout)
        except Exception as e:
            raise AdapterError(f"adapter returned an invalid container: {e}") from e
        return out
