import logging
import time
from collections.abc import Iterable

import requests

from sketchlrf.config import REQUEST_TIMEOUT, SERVICE_URL
from sketchlrf.stream import TurnstileUpdate

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 1000
READ_RETRIES = 2
RETRY_BACKOFF_S = 0.5


class ServiceError(RuntimeError):
    """Sketch service failure; status is None when no response arrived"""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class PushError(ServiceError):
    """A batch failed mid-push; the first `accepted` updates are already in the sketches"""

    def __init__(self, stream_id: str, accepted: int, cause: ServiceError):
        super().__init__(
            f"Push to stream {stream_id} stopped after {accepted} accepted updates: {cause}",
            cause.status,
        )
        self.stream_id = stream_id
        self.accepted = accepted


def _rejection(response: requests.Response) -> str:
    try:
        return str(response.json().get("error", response.text[:200]))
    except ValueError:
        return response.text[:200]


def call_service(
    method: str,
    endpoint: str,
    json: dict | None = None,
    base_url: str = SERVICE_URL,
    retries: int = 0,
) -> dict:
    """Make HTTP request to the sketch service with timeout and error handling.

    Only reads may pass retries: update batches add to the sketches and private
    releases spend budget, so replaying either changes the result.
    """
    url = f"{base_url.rstrip('/')}/{endpoint.lstrip('/')}"
    logger.debug(f"Service request: {method} {url}")

    attempt = 0
    while True:
        try:
            response = requests.request(method, url, json=json, timeout=REQUEST_TIMEOUT)
            logger.debug(f"Service response: {response.status_code}")

            response.raise_for_status()
            return response.json()
        except (requests.Timeout, requests.ConnectionError) as e:
            if attempt < retries:
                attempt += 1
                logger.warning(f"Retrying {method} {url} ({attempt}/{retries}) after: {e}")
                time.sleep(RETRY_BACKOFF_S * attempt)
                continue
            if isinstance(e, requests.Timeout):
                logger.error(f"Service request timeout: {method} {url} - {e}")
                raise ServiceError(f"Sketch service timeout on {method} /{endpoint.lstrip('/')}: {e}")
            logger.error(f"Service connection error: {method} {url} - {e}")
            raise ServiceError(f"Sketch service unreachable at {base_url}: {e}")
        except requests.HTTPError as e:
            reason = _rejection(response)
            logger.error(f"Service HTTP error: {method} {url} - Status {response.status_code} - {reason}")
            if response.status_code == 404:
                raise ServiceError(f"Sketch service HTTP error: no such stream or route /{endpoint.lstrip('/')}", 404)
            if response.status_code == 409:
                raise ServiceError(f"Sketch service HTTP error: stream registry is full ({reason})", 409)
            raise ServiceError(f"Sketch service HTTP error {response.status_code}: {reason}", response.status_code)
        except requests.RequestException as e:
            logger.error(f"Service request failed: {method} {url} - {e}")
            raise ServiceError(f"Sketch service error: {e}")


def create_stream(params: dict, base_url: str = SERVICE_URL) -> str:
    stream_id = call_service("POST", "streams", json=params, base_url=base_url)["id"]
    logger.info(f"Created {params.get('mode', 'nonprivate')} stream {stream_id} ({params.get('m')}x{params.get('n')})")
    return stream_id


def get_stream(stream_id: str, base_url: str = SERVICE_URL) -> dict:
    return call_service("GET", f"streams/{stream_id}", base_url=base_url, retries=READ_RETRIES)


def push_stream(
    stream_id: str,
    updates: Iterable[TurnstileUpdate],
    batch_size: int = DEFAULT_BATCH_SIZE,
    base_url: str = SERVICE_URL,
) -> int:
    """Post updates in batches; returns the number accepted.

    A failed batch raises PushError. The service validates a batch whole, so after a
    rejection a resume starts at PushError.accepted; after a timeout the failed batch
    may or may not have landed.
    """
    accepted = 0
    batch: list[list] = []
    for update in updates:
        batch.append([update.i, update.j, update.delta])
        if len(batch) >= batch_size:
            accepted += _post_batch(stream_id, batch, base_url, accepted)
            batch = []
    if batch:
        accepted += _post_batch(stream_id, batch, base_url, accepted)
    logger.info(f"Pushed {accepted} updates to stream {stream_id}")
    return accepted


def _post_batch(stream_id: str, batch: list[list], base_url: str, accepted: int) -> int:
    try:
        result = call_service("POST", f"streams/{stream_id}/updates", json={"updates": batch}, base_url=base_url)
    except ServiceError as e:
        raise PushError(stream_id, accepted, e) from e
    return int(result["accepted"])


def factorize_stream(stream_id: str, k: int | None = None, base_url: str = SERVICE_URL) -> dict:
    body = {} if k is None else {"k": k}
    result = call_service("POST", f"streams/{stream_id}/factorize", json=body, base_url=base_url)
    budget = result.get("cumulative_budget")
    if budget is not None:
        logger.info(f"Stream {stream_id} release {budget['releases']}: cumulative epsilon={budget['epsilon']:.4g}")
    return result
