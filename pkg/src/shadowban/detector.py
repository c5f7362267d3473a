"""Black-box ban tests against any service speaking the mock OSN protocol.

A verdict is only ever derived from a response that shows the restriction;
transport failures raise :class:`TransportError` and never count as a ban.
"""

from __future__ import annotations

import hashlib
import http.client
import json
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from urllib.parse import quote, urlencode, urlsplit

from .graph import BanProfile
from .sampler import UnknownUser

DEFAULT_SINCE = "2019-01-01T00:00:00+00:00"
GHOST_SAMPLE = 33


class TransportError(ConnectionError):
    """The endpoint could not be reached or answered garbage; retryable."""


def digest(body: bytes) -> str:
    return hashlib.sha256(body).hexdigest()


class OSNClient:
    """Keep-alive HTTP client, one connection per thread."""

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 1):
        parts = urlsplit(endpoint)
        if parts.scheme not in ("http", ""):
            raise ValueError(f"unsupported scheme in {endpoint!r}")
        self.host = parts.hostname or "127.0.0.1"
        self.port = parts.port or 80
        self.timeout = timeout
        self.retries = retries
        self._local = threading.local()

    def _conn(self, fresh: bool = False) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None or fresh:
            if conn is not None:
                conn.close()
                self._local.conn = None
            conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
            conn.connect()
            conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._local.conn = conn
        return conn

    def get(self, target: str) -> tuple[int, bytes]:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                conn = self._conn(fresh=attempt > 0)
                conn.request("GET", target)
                resp = conn.getresponse()
                return resp.status, resp.read()
            except (OSError, http.client.HTTPException, socket.timeout) as exc:
                last = exc
        raise TransportError(f"GET {target} failed: {last}") from last

    def get_json(self, target: str) -> tuple[int, dict, bytes]:
        status, body = self.get(target)
        try:
            obj = json.loads(body)
        except ValueError as exc:
            raise TransportError(f"GET {target}: response is not JSON") from exc
        if status >= 500:
            raise TransportError(f"GET {target}: server error {status}")
        return status, obj, body

    def close(self):
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None


def _client(endpoint) -> OSNClient:
    return endpoint if isinstance(endpoint, OSNClient) else OSNClient(endpoint)


@dataclass(frozen=True)
class BanEvidence:
    test: str
    request: str
    response_digest: str
    verdict: bool | None
    status: str = "ok"  # "ok" or "inactive"

    def as_dict(self) -> dict:
        return {
            "test": self.test,
            "request": self.request,
            "response_digest": self.response_digest,
            "verdict": self.verdict,
            "status": self.status,
        }


def _timeline_target(user: str, n: int | None = None, since: str | None = None) -> str:
    q = {}
    if n is not None:
        q["n"] = n
    if since is not None:
        q["since"] = since
    target = f"/user/{quote(user, safe='')}/timeline"
    return target + ("?" + urlencode(q) if q else "")


def resolve_user(endpoint, user: str) -> None:
    """Raise UnknownUser unless the account resolves."""
    status, _, _ = _client(endpoint).get_json(_timeline_target(user, n=0))
    if status == 404:
        raise UnknownUser(user)
    if status != 200:
        raise TransportError(f"resolving {user!r}: HTTP {status}")


def test_typeahead(endpoint, user: str) -> tuple[bool, BanEvidence]:
    """Banned iff the user is missing from suggestions for its own full name."""
    target = "/typeahead?" + urlencode({"q": user})
    status, obj, body = _client(endpoint).get_json(target)
    if status != 200 or "suggestions" not in obj:
        raise TransportError(f"typeahead for {user!r}: unexpected response {status}")
    verdict = user.lower() not in {s.lower() for s in obj["suggestions"]}
    return verdict, BanEvidence("typeahead", target, digest(body), verdict)


def test_search(endpoint, user: str) -> tuple[bool, BanEvidence]:
    """Banned iff an exact-name search does not return the user."""
    target = "/search?" + urlencode({"q": user})
    status, obj, body = _client(endpoint).get_json(target)
    if status != 200 or "users" not in obj:
        raise TransportError(f"search for {user!r}: unexpected response {status}")
    verdict = user.lower() not in {s.lower() for s in obj["users"]}
    return verdict, BanEvidence("search", target, digest(body), verdict)


def test_ghost(endpoint, user: str, since: str = DEFAULT_SINCE, full_scan: bool = False) -> tuple[bool | None, BanEvidence]:
    """Banned iff a recent tweet resolves as unavailable while the author resolves.

    Looks at the 33 newest tweets since ``since`` (all of them with
    ``full_scan``). A user without such tweets is inactive: verdict None.
    """
    client = _client(endpoint)
    tl_target = _timeline_target(user, None if full_scan else GHOST_SAMPLE, since)
    status, obj, tl_body = client.get_json(tl_target)
    if status == 404:
        raise UnknownUser(user)
    if status != 200 or "tweets" not in obj:
        raise TransportError(f"timeline of {user!r}: unexpected response {status}")
    tweets = obj["tweets"]
    if not tweets:
        return None, BanEvidence("ghost", tl_target, digest(tl_body), None, status="inactive")
    h = hashlib.sha256(tl_body)
    for t in tweets:
        target = f"/tweet/{int(t['id'])}"
        st, tobj, body = client.get_json(target)
        if st != 200:
            raise TransportError(f"{target}: unexpected response {st}")
        if tobj.get("status") == "unavailable" and str(tobj.get("author", "")).lower() == user.lower():
            return True, BanEvidence("ghost", target, digest(body), True)
        h.update(body)
    return False, BanEvidence("ghost", tl_target, h.hexdigest(), False)


@dataclass
class DetectionResult:
    user: str
    profile: BanProfile
    evidence: list[BanEvidence] = field(default_factory=list)
    status: str = "complete"  # complete | inactive | incomplete | unknown
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "user": self.user,
            "status": self.status,
            "bans": self.profile.as_dict(),
            "banned": self.profile.banned,
            "evidence": [e.as_dict() for e in self.evidence],
            **({"error": self.error} if self.error else {}),
        }


def detect(endpoint, user: str, since: str = DEFAULT_SINCE, full_scan: bool = False) -> DetectionResult:
    """Run the three tests; the user counts as banned if any of them fires."""
    client = _client(endpoint)
    resolve_user(client, user)
    ta, ev_ta = test_typeahead(client, user)
    se, ev_se = test_search(client, user)
    gh, ev_gh = test_ghost(client, user, since, full_scan)
    status = "inactive" if gh is None else "complete"
    return DetectionResult(user, BanProfile(ta, se, bool(gh)), [ev_ta, ev_se, ev_gh], status)


def detect_many(endpoint, users: list[str], since: str = DEFAULT_SINCE, workers: int = 8,
                full_scan: bool = False) -> list[DetectionResult]:
    """Detect every user (concurrently across users); failures become
    ``incomplete``/``unknown`` results instead of aborting the batch."""
    client = _client(endpoint)

    def one(user: str) -> DetectionResult:
        try:
            return detect(client, user, since, full_scan)
        except UnknownUser:
            return DetectionResult(user, BanProfile(), status="unknown", error="unknown user")
        except TransportError as exc:
            return DetectionResult(user, BanProfile(), status="incomplete", error=str(exc))

    if workers <= 1:
        return [one(u) for u in users]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, users))


class OSNInteractionSource:
    """Interaction source reading partners from timelines of a mock-compatible service."""

    def __init__(self, endpoint, since: str | None = None):
        self.client = _client(endpoint)
        self.since = since

    def neighbors_of(self, user: str, fanout: int) -> list[str]:
        status, obj, _ = self.client.get_json(_timeline_target(user, fanout, self.since))
        if status == 404:
            raise UnknownUser(user)
        out: list[str] = []
        for t in obj.get("tweets", []):
            if t.get("kind") not in ("reply", "retweet"):
                continue
            st, ctx, _ = self.client.get_json(f"/tweet/{int(t['id'])}/context")
            partner = ctx.get("in_reply_to_author") if st == 200 else None
            if partner and partner != user and partner not in out:
                out.append(partner)
            if len(out) == fanout:
                break
        return out


# keep pytest from collecting the ban tests when imported into test modules
test_typeahead.__test__ = False
test_search.__test__ = False
test_ghost.__test__ = False
