"""Extract leg of the pipeline: pull provider files over the wire.

Supported methods: OAI-PMH 2.0 ListRecords with resumption-token paging,
ResourceSync 1.1 resource/change lists, a plain set of URLs, and manual
upload.  All network traffic honours a politeness budget (bounded in-flight
requests, optional inter-request delay, per-request timeout, retries with
exponential backoff).  Every method produces the same FileSet shape so the
transform stages never care where bytes came from.
"""

from __future__ import annotations

import hashlib
import posixpath
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Optional, Sequence, Tuple
from urllib.parse import quote, urljoin, urlparse

import requests
import xml.etree.ElementTree as ET

__all__ = [
    "AllFailedError",
    "CapabilityError",
    "FetchConfig",
    "FetchError",
    "FileItem",
    "FileSet",
    "HarvestError",
    "OaiOptions",
    "Politeness",
    "ProtocolError",
    "TransportError",
    "fetch_urls",
    "make_item",
    "oai_harvest",
    "rs_sync",
]

OAI_NS = "http://www.openarchives.org/OAI/2.0/"
SITEMAP_NS = "http://www.sitemaps.org/schemas/sitemap/0.9"
RS_NS = "http://www.openarchives.org/rs/terms/"

_MEDIA_TYPES = {
    ".xml": "application/xml",
    ".rdf": "application/rdf+xml",
    ".json": "application/json",
    ".csv": "text/csv",
    ".txt": "text/plain",
}

# OAI-PMH condition codes that mean "empty result", not failure
_OAI_EMPTY = ("noRecordsMatch",)

# Margin subtracted from the previous fetch instant on incremental OAI
# harvests, guarding against provider clock skew.
INCREMENTAL_MARGIN = timedelta(hours=1)


class HarvestError(Exception):
    pass


class ProtocolError(HarvestError):
    """OAI-PMH error condition, surfaced verbatim."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.detail = message


class TransportError(HarvestError):
    pass


class CapabilityError(HarvestError):
    pass


class AllFailedError(HarvestError):
    pass


@dataclass(frozen=True)
class Politeness:
    max_in_flight: int = 4
    min_delay_ms: int = 0
    timeout_s: float = 30.0
    retries: int = 3
    backoff_s: float = 0.2

    def to_dict(self) -> dict:
        return {
            "max_in_flight": self.max_in_flight,
            "min_delay_ms": self.min_delay_ms,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "backoff_s": self.backoff_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Politeness":
        return cls(**{k: data[k] for k in cls().to_dict() if k in data})


@dataclass(frozen=True)
class OaiOptions:
    metadata_prefix: str
    set_spec: Optional[str] = None
    from_: Optional[str] = None  # UTC datestamps, ISO form
    until: Optional[str] = None
    identify: bool = False  # issue Identify before listing

    def to_dict(self) -> dict:
        out: dict = {"metadata_prefix": self.metadata_prefix}
        if self.set_spec:
            out["set"] = self.set_spec
        if self.from_:
            out["from"] = self.from_
        if self.until:
            out["until"] = self.until
        if self.identify:
            out["identify"] = True
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OaiOptions":
        return cls(
            metadata_prefix=data["metadata_prefix"],
            set_spec=data.get("set"),
            from_=data.get("from"),
            until=data.get("until"),
            identify=bool(data.get("identify", False)),
        )


@dataclass(frozen=True)
class FetchConfig:
    method: str  # oaipmh | resourcesync | urlset | upload
    endpoint: Optional[str] = None
    oai: Optional[OaiOptions] = None
    urls: Tuple[str, ...] = ()
    politeness: Politeness = field(default_factory=Politeness)
    bearer_token: Optional[str] = None

    def __post_init__(self) -> None:
        if self.method not in ("oaipmh", "resourcesync", "urlset", "upload"):
            raise ValueError(f"unknown fetch method: {self.method!r}")
        if self.method != "upload" and not self.endpoint and not self.urls:
            raise ValueError(f"method {self.method!r} requires an endpoint")
        if self.method == "oaipmh" and (self.oai is None or not self.oai.metadata_prefix):
            raise ValueError("oaipmh requires oai.metadata_prefix")
        if self.method == "urlset" and not self.urls:
            raise ValueError("urlset requires a non-empty url list")
        object.__setattr__(self, "urls", tuple(self.urls))

    def to_dict(self) -> dict:
        out: dict = {"method": self.method}
        if self.endpoint:
            out["endpoint"] = self.endpoint
        if self.oai:
            out["oai"] = self.oai.to_dict()
        if self.urls:
            out["urls"] = list(self.urls)
        out["politeness"] = self.politeness.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FetchConfig":
        return cls(
            method=data["method"],
            endpoint=data.get("endpoint"),
            oai=OaiOptions.from_dict(data["oai"]) if data.get("oai") else None,
            urls=tuple(data.get("urls", [])),
            politeness=Politeness.from_dict(data.get("politeness", {})),
            bearer_token=data.get("bearer_token"),
        )


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def guess_media_type(name: str, content_type: Optional[str] = None) -> str:
    if content_type:
        return content_type.split(";", 1)[0].strip()
    ext = posixpath.splitext(name)[1].lower()
    return _MEDIA_TYPES.get(ext, "application/octet-stream")


@dataclass(frozen=True)
class FileItem:
    name: str
    data: bytes
    source_uri: str
    checksum: str  # sha256 hex of data
    media_type: str
    deleted: bool = False
    note: Optional[str] = None

    def __post_init__(self) -> None:
        if self.checksum != _sha256(self.data):
            raise ValueError(f"checksum does not match bytes for {self.name!r}")


def make_item(
    name: str,
    data: bytes,
    source_uri: str,
    media_type: Optional[str] = None,
    deleted: bool = False,
    note: Optional[str] = None,
) -> FileItem:
    return FileItem(
        name=name,
        data=data,
        source_uri=source_uri,
        checksum=_sha256(data),
        media_type=media_type or guess_media_type(name),
        deleted=deleted,
        note=note,
    )


@dataclass(frozen=True)
class FetchError:
    source: str
    message: str


@dataclass(frozen=True)
class FileSet:
    items: Tuple[FileItem, ...] = ()
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    errors: Tuple[FetchError, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "errors", tuple(self.errors))
        names = [item.name for item in self.items]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate item names in file set: {dupes}")

    def __len__(self) -> int:
        return len(self.items)

    def by_name(self, name: str) -> FileItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def names(self) -> Tuple[str, ...]:
        return tuple(item.name for item in self.items)

    def first(self, limit: int) -> "FileSet":
        return FileSet(items=self.items[:limit], fetched_at=self.fetched_at, errors=self.errors)


def upload_fileset(files: Sequence[Tuple[str, bytes]]) -> FileSet:
    """Build a FileSet from manually supplied (name, bytes) pairs."""
    return FileSet(items=tuple(make_item(name, data, f"upload:{name}") for name, data in files))


def dedupe_name(name: str, taken: set) -> str:
    """Deduplicate a file name with numeric suffixes: name.xml, name-1.xml, ..."""
    if name not in taken:
        return name
    stem, ext = posixpath.splitext(name)
    k = 1
    while f"{stem}-{k}{ext}" in taken:
        k += 1
    return f"{stem}-{k}{ext}"


class _Fetcher:
    """Polite HTTP GET: bounded concurrency, spacing, retries with backoff."""

    def __init__(self, politeness: Politeness, bearer_token: Optional[str] = None):
        self.politeness = politeness
        self.session = requests.Session()
        self.session.headers["User-Agent"] = "archint-harvester/0.1"
        if bearer_token:
            self.session.headers["Authorization"] = f"Bearer {bearer_token}"
        self._gate = threading.Semaphore(max(1, politeness.max_in_flight))
        self._spacing_lock = threading.Lock()
        self._last_request = 0.0

    def get(self, url: str, params: Optional[dict] = None) -> requests.Response:
        last_exc: Optional[Exception] = None
        for attempt in range(self.politeness.retries + 1):
            self._space_out()
            try:
                with self._gate:
                    resp = self.session.get(url, params=params, timeout=self.politeness.timeout_s)
                if resp.status_code >= 500:
                    raise TransportError(f"HTTP {resp.status_code} from {url}")
                resp.raise_for_status()
                return resp
            except (requests.RequestException, TransportError) as exc:
                last_exc = exc
                if attempt < self.politeness.retries:
                    time.sleep(self.politeness.backoff_s * (2**attempt))
        raise TransportError(f"{url}: {last_exc}") from last_exc

    def _space_out(self) -> None:
        delay = self.politeness.min_delay_ms / 1000.0
        if delay <= 0:
            return
        with self._spacing_lock:
            wait = self._last_request + delay - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if tag.startswith("{") else tag


def _child(el: ET.Element, name: str) -> Optional[ET.Element]:
    for c in el:
        if _local(c.tag) == name:
            return c
    return None


def _children(el: ET.Element, name: str) -> List[ET.Element]:
    return [c for c in el if _local(c.tag) == name]


# --- OAI-PMH ---------------------------------------------------------------


def oai_harvest(config: FetchConfig, previous: Optional[FileSet] = None) -> FileSet:
    """ListRecords harvest, following the resumption token chain to exhaustion.

    One item per record, named by the percent-encoded OAI identifier; the
    record's ``metadata`` child is serialized standalone.  Records with a
    ``status="deleted"`` header become items flagged deleted with empty
    bytes.  ``noRecordsMatch`` yields an empty FileSet; other protocol error
    conditions are surfaced verbatim as ProtocolError.

    When ``previous`` is given and no explicit ``from`` is configured, an
    incremental harvest is issued from the previous fetch instant minus a
    one-hour safety margin.
    """
    if config.method != "oaipmh" or config.oai is None:
        raise ValueError("oai_harvest requires an oaipmh FetchConfig")
    fetcher = _Fetcher(config.politeness, config.bearer_token)
    fetched_at = datetime.now(timezone.utc)

    if config.oai.identify:
        fetcher.get(config.endpoint, params={"verb": "Identify"})

    params: Dict[str, str] = {
        "verb": "ListRecords",
        "metadataPrefix": config.oai.metadata_prefix,
    }
    if config.oai.set_spec:
        params["set"] = config.oai.set_spec
    from_ = config.oai.from_
    if from_ is None and previous is not None:
        from_ = (previous.fetched_at - INCREMENTAL_MARGIN).strftime("%Y-%m-%dT%H:%M:%SZ")
    if from_:
        params["from"] = from_
    if config.oai.until:
        params["until"] = config.oai.until

    items: Dict[str, FileItem] = {}
    while True:
        resp = fetcher.get(config.endpoint, params=params)
        try:
            root = ET.fromstring(resp.content)
        except ET.ParseError as exc:
            raise ProtocolError("bad-response", f"unparseable OAI response: {exc}") from exc

        error = _child(root, "error")
        if error is not None:
            code = error.attrib.get("code", "unknown")
            if code in _OAI_EMPTY:
                return FileSet(items=(), fetched_at=fetched_at)
            raise ProtocolError(code, (error.text or "").strip())

        list_records = _child(root, "ListRecords")
        if list_records is None:
            raise ProtocolError("bad-response", "missing ListRecords element")

        for record in _children(list_records, "record"):
            header = _child(record, "header")
            if header is None:
                continue
            ident_el = _child(header, "identifier")
            identifier = (ident_el.text or "").strip() if ident_el is not None else ""
            if not identifier:
                continue
            name = quote(identifier, safe="") + ".xml"
            if header.attrib.get("status") == "deleted":
                items[name] = make_item(name, b"", identifier, "application/xml", deleted=True)
                continue
            metadata = _child(record, "metadata")
            payload = b""
            for child in metadata if metadata is not None else ():
                payload = ET.tostring(child, encoding="utf-8", xml_declaration=True)
                break
            items[name] = make_item(name, payload, identifier, "application/xml")

        token_el = _child(list_records, "resumptionToken")
        token = (token_el.text or "").strip() if token_el is not None else ""
        if not token:
            break
        params = {"verb": "ListRecords", "resumptionToken": token}

    return FileSet(items=tuple(items.values()), fetched_at=fetched_at)


# --- ResourceSync ----------------------------------------------------------


@dataclass(frozen=True)
class _SitemapEntry:
    loc: str
    capability: Optional[str]
    change: Optional[str]
    hash_md5: Optional[str]
    length: Optional[int]
    lastmod: Optional[datetime]


def _parse_sitemap(data: bytes, base_url: str) -> Tuple[Optional[str], List[_SitemapEntry]]:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise CapabilityError(f"not a sitemap document: {exc}") from exc
    if _local(root.tag) not in ("urlset", "sitemapindex"):
        raise CapabilityError(f"unexpected root element {_local(root.tag)!r}")

    capability = None
    top_md = _child(root, "md")
    if top_md is not None:
        capability = top_md.attrib.get("capability")

    entries: List[_SitemapEntry] = []
    for url_el in _children(root, "url") + _children(root, "sitemap"):
        loc_el = _child(url_el, "loc")
        if loc_el is None or not (loc_el.text or "").strip():
            continue
        loc = urljoin(base_url, loc_el.text.strip())
        md = _child(url_el, "md")
        hash_md5 = None
        length = None
        change = None
        entry_capability = None
        if md is not None:
            entry_capability = md.attrib.get("capability")
            change = md.attrib.get("change")
            for part in md.attrib.get("hash", "").split():
                if part.startswith("md5:"):
                    hash_md5 = part[4:]
            if "length" in md.attrib:
                try:
                    length = int(md.attrib["length"])
                except ValueError:
                    length = None
        lastmod = None
        lastmod_el = _child(url_el, "lastmod")
        stamp = None
        if lastmod_el is not None and lastmod_el.text:
            stamp = lastmod_el.text.strip()
        elif md is not None and md.attrib.get("datetime"):
            stamp = md.attrib["datetime"]
        if stamp:
            try:
                lastmod = datetime.fromisoformat(stamp.replace("Z", "+00:00"))
                if lastmod.tzinfo is None:
                    lastmod = lastmod.replace(tzinfo=timezone.utc)
            except ValueError:
                lastmod = None
        entries.append(
            _SitemapEntry(
                loc=loc,
                capability=entry_capability,
                change=change,
                hash_md5=hash_md5,
                length=length,
                lastmod=lastmod,
            )
        )
    return capability, entries


def _download_resources(
    fetcher: _Fetcher,
    entries: Sequence[_SitemapEntry],
    taken_names: set,
    max_workers: int,
) -> List[FileItem]:
    """Fetch resources concurrently; assembly order follows the entry order."""
    names: List[str] = []
    for entry in entries:
        name = posixpath.basename(urlparse(entry.loc).path) or "resource"
        name = dedupe_name(name, taken_names)
        taken_names.add(name)
        names.append(name)

    def fetch_one(entry: _SitemapEntry) -> bytes:
        return fetcher.get(entry.loc).content

    items: List[FileItem] = []
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = [pool.submit(fetch_one, e) for e in entries]
        for entry, name, future in zip(entries, names, futures):
            data = future.result()
            note = None
            if entry.hash_md5 is not None and hashlib.md5(data).hexdigest() != entry.hash_md5:
                note = "checksum-mismatch"
            if entry.length is not None and len(data) != entry.length and note is None:
                note = "length-mismatch"
            items.append(make_item(name, data, entry.loc, guess_media_type(name), note=note))
    return items


def rs_sync(config: FetchConfig, previous: Optional[FileSet] = None) -> FileSet:
    """Synchronize against a ResourceSync source.

    The endpoint may be a capability list or a resource list.  A full sync
    downloads every resource on the resource list.  When ``previous`` is
    given and a change list is advertised, only changes dated after the
    previous fetch instant are applied on top of the previous set: created
    and updated resources are downloaded, deletions are flagged.  Advertised
    md5/length values are verified; mismatches flag the item and the sync
    continues.
    """
    if config.method != "resourcesync":
        raise ValueError("rs_sync requires a resourcesync FetchConfig")
    fetcher = _Fetcher(config.politeness, config.bearer_token)
    fetched_at = datetime.now(timezone.utc)

    capability, entries = _parse_sitemap(fetcher.get(config.endpoint).content, config.endpoint)

    resource_list_url: Optional[str] = None
    change_list_url: Optional[str] = None
    resource_entries: List[_SitemapEntry] = []
    if capability == "capabilitylist":
        for entry in entries:
            if entry.capability == "resourcelist":
                resource_list_url = entry.loc
            elif entry.capability == "changelist":
                change_list_url = entry.loc
        if resource_list_url is None and change_list_url is None:
            raise CapabilityError("capability list advertises neither a resource list nor a change list")
    elif capability in ("resourcelist", None):
        resource_list_url = config.endpoint
        resource_entries = list(entries)
    elif capability == "changelist":
        change_list_url = config.endpoint
    else:
        raise CapabilityError(f"unsupported capability {capability!r}")

    # incremental path: previous state plus an advertised change list
    if previous is not None and change_list_url is not None:
        _, change_entries = _parse_sitemap(fetcher.get(change_list_url).content, change_list_url)
        changes = [
            e
            for e in change_entries
            if e.change in ("created", "updated", "deleted")
            and (e.lastmod is None or e.lastmod > previous.fetched_at)
        ]
        by_uri: Dict[str, FileItem] = {item.source_uri: item for item in previous.items}
        order: List[str] = [item.source_uri for item in previous.items]
        taken = {item.name for item in previous.items}

        to_download = [e for e in changes if e.change in ("created", "updated")]
        with ThreadPoolExecutor(max_workers=max(1, config.politeness.max_in_flight)) as pool:
            futures = [pool.submit(lambda e: fetcher.get(e.loc).content, e) for e in to_download]
            for entry, future in zip(to_download, futures):
                data = future.result()
                note = None
                if entry.hash_md5 is not None and hashlib.md5(data).hexdigest() != entry.hash_md5:
                    note = "checksum-mismatch"
                previous_item = by_uri.get(entry.loc)
                if previous_item is not None:
                    name = previous_item.name
                else:
                    name = dedupe_name(posixpath.basename(urlparse(entry.loc).path) or "resource", taken)
                    taken.add(name)
                    order.append(entry.loc)
                by_uri[entry.loc] = make_item(name, data, entry.loc, guess_media_type(name), note=note)
        for entry in changes:
            if entry.change == "deleted" and entry.loc in by_uri:
                old = by_uri[entry.loc]
                by_uri[entry.loc] = make_item(old.name, b"", entry.loc, old.media_type, deleted=True)
        return FileSet(items=tuple(by_uri[uri] for uri in order), fetched_at=fetched_at)

    if resource_list_url is None:
        raise CapabilityError("change list given without previous state to apply it to")
    if capability == "capabilitylist":
        _, resource_entries = _parse_sitemap(fetcher.get(resource_list_url).content, resource_list_url)

    items = _download_resources(fetcher, resource_entries, set(), config.politeness.max_in_flight)
    return FileSet(items=tuple(items), fetched_at=fetched_at)


# --- URL set ---------------------------------------------------------------


def fetch_urls(config: FetchConfig) -> FileSet:
    """Download a fixed set of URLs, preserving their order.

    Names derive from the final path segment, deduplicated with numeric
    suffixes.  Per-URL failures (after retries) are recorded as FileSet
    errors; if every URL fails the whole fetch fails.
    """
    if config.method != "urlset":
        raise ValueError("fetch_urls requires a urlset FetchConfig")
    fetcher = _Fetcher(config.politeness, config.bearer_token)
    fetched_at = datetime.now(timezone.utc)

    taken: set = set()
    names: List[str] = []
    for url in config.urls:
        name = posixpath.basename(urlparse(url).path) or "download"
        name = dedupe_name(name, taken)
        taken.add(name)
        names.append(name)

    def fetch_one(url: str) -> requests.Response:
        return fetcher.get(url)

    items: List[FileItem] = []
    errors: List[FetchError] = []
    with ThreadPoolExecutor(max_workers=max(1, config.politeness.max_in_flight)) as pool:
        futures = [pool.submit(fetch_one, url) for url in config.urls]
        for url, name, future in zip(config.urls, names, futures):
            try:
                resp = future.result()
            except HarvestError as exc:
                errors.append(FetchError(source=url, message=str(exc)))
                continue
            media_type = guess_media_type(name, resp.headers.get("Content-Type"))
            items.append(make_item(name, resp.content, url, media_type))

    if config.urls and not items:
        raise AllFailedError(f"all {len(config.urls)} fetches failed: {errors[0].message}")
    return FileSet(items=tuple(items), fetched_at=fetched_at, errors=tuple(errors))
