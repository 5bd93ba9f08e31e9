"""Vision-language API client: structured prompt building, transports with
retry/backoff, probe question bank, and audit persistence.

Every outbound request and raw inbound response is written to the exchange
directory before any parsing, so runs are reconstructible. A replay transport
reads canned responses from disk, which lets the whole pipeline run offline.
"""

from __future__ import annotations

import base64
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import (
    AssetNotFoundError,
    InvalidArgumentError,
    InvalidProbeSetError,
    MalformedResponseError,
    TransportError,
)
from .heatmap import ScoredFramePair

ENV_URL = "VISTA_VLM_URL"
ENV_KEY = "VISTA_VLM_KEY"
ENV_MODEL = "VISTA_VLM_MODEL"

RETRY_BASE_SECONDS = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 5
DEFAULT_MAX_IN_FLIGHT = 4

PROBE_QUESTIONS = (
    "What is the most prominent object in the center of the view?",
    "Which traffic control elements are visible in the scene?",
    "Which road users are ahead of the vehicle?",
    "Which environmental features stand out around the road?",
    "Where is the driver's focus most likely to move next?",
)

CAPTION_INSTRUCTION = (
    "You are shown four aligned images from a driving scene: the camera frame at "
    "time t, its gaze overlay, the camera frame at time t+1, and its gaze overlay.\n"
    "Write exactly four sentences in one paragraph, and nothing else:\n"
    "(1) a description of the scene;\n"
    "(2) the driver's current gaze focus;\n"
    "(3) a future-tense prediction of where the gaze will shift next;\n"
    "(4) the reason for that shift.\n"
    "Do not add extra sentences, headers, or lists.\n"
    "Images: {image_refs}\n"
    "{constraints}"
)

PROBE_INSTRUCTION = (
    "Answer the five numbered questions about the driving scene images. Rely "
    "strictly on visible cues and avoid speculation. Reply with exactly five "
    "lines, 'A1:' through 'A5:', one answer per line.\n"
    "Images: {image_refs}\n"
    "{constraints}"
)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    instruction_text: str
    kind: str  # caption_draft | zero_shot_caption | probe

    def __post_init__(self):
        if self.kind not in ("caption_draft", "zero_shot_caption", "probe"):
            raise InvalidArgumentError(f"unknown template kind {self.kind!r}")


CAPTION_TEMPLATE = PromptTemplate("caption_draft", CAPTION_INSTRUCTION, "caption_draft")
ZERO_SHOT_TEMPLATE = PromptTemplate("zero_shot_caption", CAPTION_INSTRUCTION, "zero_shot_caption")
PROBE_TEMPLATE = PromptTemplate("probe", PROBE_INSTRUCTION, "probe")


@dataclass(frozen=True)
class BoundPrompt:
    template_name: str
    kind: str
    sample_id: str
    text: str
    image_paths: tuple[str, ...]

    def __post_init__(self):
        if "{" in re.sub(r"\{\{|\}\}", "", self.text):
            leftover = re.findall(r"\{(\w+)\}", self.text)
            if leftover:
                raise InvalidArgumentError(f"unbound placeholders: {leftover}")


@dataclass(frozen=True)
class DraftResponse:
    sample_id: str
    raw_text: str
    model_id: str
    latency_ms: float
    attempt: int

    def __post_init__(self):
        if self.attempt < 1:
            raise InvalidArgumentError("attempt must be >= 1")


@dataclass(frozen=True)
class ProbeSet:
    sample_id: str
    questions: tuple[str, ...]
    answers: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.questions) != 5:
            raise InvalidProbeSetError(f"expected 5 questions, got {len(self.questions)}")
        if len(self.answers) > 5:
            raise InvalidProbeSetError(f"more answers ({len(self.answers)}) than questions")


def _require_assets(pair: ScoredFramePair) -> tuple[str, ...]:
    paths = (pair.rgb_t, pair.gaze_t, pair.rgb_t1, pair.gaze_t1)
    for p in paths:
        if not p or not Path(p).is_file():
            raise AssetNotFoundError(f"missing asset for {pair.sample_id}: {p!r}")
    return paths


def build_caption_prompt(pair: ScoredFramePair,
                         template: PromptTemplate = CAPTION_TEMPLATE,
                         constraints: str = "") -> BoundPrompt:
    """Bind the four aligned image references into the caption instruction.

    Pure function of (template, pair): no clock or randomness enters the text.
    """
    paths = _require_assets(pair)
    refs = ", ".join(Path(p).name for p in paths)
    text = template.instruction_text.format(image_refs=refs, constraints=constraints).rstrip()
    return BoundPrompt(
        template_name=template.name,
        kind=template.kind,
        sample_id=pair.sample_id,
        text=text,
        image_paths=paths,
    )


def build_probe_prompt(pair: ScoredFramePair, questions=PROBE_QUESTIONS,
                       template: PromptTemplate = PROBE_TEMPLATE) -> BoundPrompt:
    if len(questions) != 5:
        raise InvalidProbeSetError(f"expected 5 questions, got {len(questions)}")
    paths = _require_assets(pair)
    refs = ", ".join(Path(p).name for p in paths)
    numbered = "\n".join(f"Q{i + 1}: {q}" for i, q in enumerate(questions))
    text = template.instruction_text.format(image_refs=refs, constraints=numbered).rstrip()
    return BoundPrompt(
        template_name=template.name,
        kind=template.kind,
        sample_id=pair.sample_id,
        text=text,
        image_paths=paths,
    )


def parse_probe_answers(raw_text: str) -> tuple[str, ...]:
    """Extract exactly five answers; tolerant of 'A1:'/'1.' prefixes."""
    answers = []
    for line in raw_text.splitlines():
        line = line.strip()
        if not line:
            continue
        line = re.sub(r"^(?:a(?:nswer)?\s*)?\d+\s*[:.)-]\s*", "", line, flags=re.IGNORECASE)
        if line:
            answers.append(line)
    if len(answers) != 5:
        raise MalformedResponseError(
            f"expected 5 probe answers, found {len(answers)}", raw_body=raw_text
        )
    return tuple(answers)


# --- transports ---

class HttpTransport:
    """HTTPS POST with a JSON body: instruction text plus base64 images; the
    response body is JSON with a single text field. One adapter boundary so
    alternate providers can plug in."""

    def __init__(self, base_url: str, api_key: str, model_id: str, session=None,
                 timeout: float = 60.0):
        if not base_url:
            raise InvalidArgumentError(f"{ENV_URL} is not configured")
        if not api_key:
            raise InvalidArgumentError(f"{ENV_KEY} is not configured")
        if not model_id:
            raise InvalidArgumentError(f"{ENV_MODEL} is not configured")
        self.base_url = base_url
        self.api_key = api_key
        self.model_id = model_id
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    @classmethod
    def from_env(cls, session=None) -> "HttpTransport":
        return cls(
            base_url=os.environ.get(ENV_URL, ""),
            api_key=os.environ.get(ENV_KEY, ""),
            model_id=os.environ.get(ENV_MODEL, ""),
            session=session,
        )

    def send(self, prompt: BoundPrompt) -> str:
        images = []
        for p in prompt.image_paths:
            images.append(base64.b64encode(Path(p).read_bytes()).decode("ascii"))
        body = {"model": self.model_id, "instruction": prompt.text, "images": images}
        try:
            resp = self._session.post(
                self.base_url,
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except Exception as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise MalformedResponseError(
                f"unexpected status {resp.status_code}", raw_body=getattr(resp, "text", "")
            )
        try:
            payload = resp.json()
            return payload["text"]
        except MalformedResponseError:
            raise
        except Exception as exc:
            raise MalformedResponseError(
                f"response body not in the expected envelope: {exc}",
                raw_body=getattr(resp, "text", ""),
            ) from exc


class ReplayTransport:
    """Deterministic offline transport: <dir>/<sample_id>/<template_name>.txt."""

    model_id = "replay"

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise InvalidArgumentError(f"replay directory not found: {self.directory}")

    def send(self, prompt: BoundPrompt) -> str:
        path = self.directory / prompt.sample_id / f"{prompt.template_name}.txt"
        if not path.is_file():
            raise TransportError(f"no canned response at {path}")
        return path.read_text(encoding="utf-8")


class RateLimiter:
    """Global minimum spacing between dispatches."""

    def __init__(self, min_interval: float = 0.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last = -float("inf")

    def wait(self) -> None:
        if self.min_interval <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                delta = now - self._last
                if delta >= self.min_interval:
                    self._last = now
                    return
                pause = self.min_interval - delta
            self._sleep(pause)


class VlmClient:
    """Draft/probe requests with exponential backoff and audit persistence.

    Retries transport failures with base 1 s doubling up to 5 attempts; a
    recorded successful response for (sample_id, template) is returned as-is
    instead of re-requesting.
    """

    def __init__(self, transport, exchange_dir, sleep: Callable[[float], None] = time.sleep,
                 max_attempts: int = MAX_ATTEMPTS, rate_limiter: Optional[RateLimiter] = None,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT):
        self.transport = transport
        self.exchange_dir = Path(exchange_dir)
        self.exchange_dir.mkdir(parents=True, exist_ok=True)
        self._sleep = sleep
        self.max_attempts = max_attempts
        self.rate_limiter = rate_limiter or RateLimiter(0.0)
        self.max_in_flight = max_in_flight
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    @property
    def model_id(self) -> str:
        return getattr(self.transport, "model_id", "unknown")

    def _sample_lock(self, sample_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sample_id, threading.Lock())

    def _paths(self, sample_id: str, template_name: str) -> tuple[Path, Path, Path]:
        base = self.exchange_dir / sample_id
        return (
            base / f"{template_name}.request.json",
            base / f"{template_name}.response.txt",
            base / f"{template_name}.meta.json",
        )

    def recorded_response(self, sample_id: str, template_name: str) -> Optional[DraftResponse]:
        _, resp_path, meta_path = self._paths(sample_id, template_name)
        if not resp_path.is_file():
            return None
        meta = {}
        if meta_path.is_file():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return DraftResponse(
            sample_id=sample_id,
            raw_text=resp_path.read_text(encoding="utf-8"),
            model_id=meta.get("model_id", self.model_id),
            latency_ms=meta.get("latency_ms", 0.0),
            attempt=meta.get("attempt", 1),
        )

    def _dispatch(self, prompt: BoundPrompt) -> DraftResponse:
        recorded = self.recorded_response(prompt.sample_id, prompt.template_name)
        if recorded is not None:
            return recorded
        req_path, resp_path, meta_path = self._paths(prompt.sample_id, prompt.template_name)
        with self._sample_lock(prompt.sample_id):
            req_path.parent.mkdir(parents=True, exist_ok=True)
            req_path.write_text(
                json.dumps(
                    {
                        "sample_id": prompt.sample_id,
                        "template": prompt.template_name,
                        "instruction": prompt.text,
                        "images": list(prompt.image_paths),
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )
        last_error: Optional[Exception] = None
        for attempt in range(1, self.max_attempts + 1):
            self.rate_limiter.wait()
            start = time.monotonic()
            try:
                raw = self.transport.send(prompt)
            except TransportError as exc:
                last_error = exc
                if attempt < self.max_attempts:
                    self._sleep(RETRY_BASE_SECONDS * RETRY_FACTOR ** (attempt - 1))
                continue
            latency_ms = (time.monotonic() - start) * 1000.0
            if self.model_id == "replay":
                latency_ms = 0.0
            with self._sample_lock(prompt.sample_id):
                resp_path.write_text(raw, encoding="utf-8")
                meta_path.write_text(
                    json.dumps(
                        {"model_id": self.model_id, "attempt": attempt, "latency_ms": latency_ms},
                        indent=2,
                        sort_keys=True,
                    )
                    + "\n",
                    encoding="utf-8",
                )
            return DraftResponse(
                sample_id=prompt.sample_id,
                raw_text=raw,
                model_id=self.model_id,
                latency_ms=latency_ms,
                attempt=attempt,
            )
        raise TransportError(
            f"gave up after {self.max_attempts} attempts for {prompt.sample_id}: {last_error}"
        )

    def request_draft(self, prompt: BoundPrompt) -> DraftResponse:
        return self._dispatch(prompt)

    def request_probe_answers(self, pair: ScoredFramePair, questions=PROBE_QUESTIONS) -> ProbeSet:
        if len(questions) != 5:
            raise InvalidProbeSetError(f"expected 5 questions, got {len(questions)}")
        prompt = build_probe_prompt(pair, questions)
        response = self._dispatch(prompt)
        answers = parse_probe_answers(response.raw_text)
        return ProbeSet(sample_id=pair.sample_id, questions=tuple(questions), answers=answers)

    def draft_many(self, prompts: list[BoundPrompt]) -> list[DraftResponse]:
        """Bounded concurrent dispatch, results in prompt order."""
        if not prompts:
            return []
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self._dispatch, prompts))
