"""
JSON instance files.

Document layout: n_states, n_actions, gamma, rho[s], kernel[s][a][s'],
rewards[i][s][a], thresholds[i-1], plus an optional free-form "meta" object.
Every rejection names the 1-based line of the offending key and the field path.
"""

import json
import logging
import re

import numpy as np

from .errors import InstanceFormatError, InvalidInstanceError
from .mdp_core import ROW_SUM_TOL, TabularCmdp

logger = logging.getLogger('cmdpcut.instance_io')

REQUIRED_FIELDS = ("n_states", "n_actions", "gamma", "rho", "kernel", "rewards", "thresholds")
OPTIONAL_FIELDS = ("meta",)
WHITESPACE = re.compile(r"[ \t\n\r]*")


class InstanceReader:
    """Turns an instance document into a TabularCmdp, one field at a time."""

    def __init__(self, text, source="<string>"):
        self.text = text
        self.source = source
        self._payload = None
        self._key_offsets = {}

    def _top_level_offsets(self):
        """Character offset of every top-level key; only called on text that already decoded."""
        decoder = json.JSONDecoder()
        offsets = {}
        index = WHITESPACE.match(self.text, 0).end() + 1
        while True:
            index = WHITESPACE.match(self.text, index).end()
            if self.text[index] == "}":
                return offsets
            key, end = decoder.raw_decode(self.text, index)
            offsets[key] = index
            # past ':' to the value, then past the value to ',' or '}'
            index = WHITESPACE.match(self.text, end).end() + 1
            index = WHITESPACE.match(self.text, index).end()
            _, index = decoder.raw_decode(self.text, index)
            index = WHITESPACE.match(self.text, index).end()
            if self.text[index] == ",":
                index += 1

    def _key_line(self, key):
        offset = self._key_offsets.get(key)
        if offset is None:
            return None
        return self.text.count("\n", 0, offset) + 1

    def _fail(self, message, key, path=None):
        raise InstanceFormatError(message, line=self._key_line(key), field=path or key)

    def _decode(self):
        try:
            payload = json.loads(self.text)
        except json.JSONDecodeError as e:
            logger.error(f"{self.source}: invalid JSON: {e.msg}")
            raise InstanceFormatError(f"invalid JSON: {e.msg}", line=e.lineno) from e
        if not isinstance(payload, dict):
            raise InstanceFormatError("top level must be a JSON object", line=1)
        self._key_offsets = self._top_level_offsets()

        missing = [key for key in REQUIRED_FIELDS if key not in payload]
        if missing:
            raise InstanceFormatError(f"missing field(s): {', '.join(missing)}", line=1, field=missing[0])
        for key in payload:
            if key not in REQUIRED_FIELDS and key not in OPTIONAL_FIELDS:
                self._fail(f"unknown field '{key}'", key)
        return payload

    def _extract_count(self, key):
        value = self._payload[key]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            self._fail(f"{key} must be a positive integer, got {value!r}", key)
        return value

    def _extract_scalar(self, key):
        value = self._payload[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self._fail(f"{key} must be a number, got {value!r}", key)
        return float(value)

    def _extract_table(self, key, shape):
        """Nested lists of the given shape -> float array; None in shape means any length >= 1."""
        value = self._payload[key]

        def walk(node, depth, path):
            expected = shape[depth]
            if not isinstance(node, list):
                self._fail(f"expected a list at depth {depth}", key, path)
            if expected is not None and len(node) != expected:
                self._fail(f"expected {expected} entries, got {len(node)}", key, path)
            if expected is None and not node and depth == 0 and len(shape) > 1:
                self._fail("expected at least one entry", key, path)
            for index, child in enumerate(node):
                child_path = f"{path}[{index}]"
                if depth + 1 < len(shape):
                    walk(child, depth + 1, child_path)
                elif isinstance(child, bool) or not isinstance(child, (int, float)):
                    self._fail(f"expected a number, got {child!r}", key, child_path)

        walk(value, 0, key)
        if not value:
            return np.zeros((0,) + tuple(dim or 0 for dim in shape[1:]))
        return np.asarray(value, dtype=float)

    def _validate_kernel(self, kernel):
        if not np.all(np.isfinite(kernel)):
            self._fail("non-finite transition probability", "kernel")
        for s, a in np.ndindex(kernel.shape[:2]):
            row = kernel[s, a]
            if np.any(row < 0):
                self._fail("negative transition probability", "kernel", f"kernel[{s}][{a}]")
            if abs(row.sum() - 1.0) > ROW_SUM_TOL:
                self._fail(f"row sums to {row.sum()!r}, not 1", "kernel", f"kernel[{s}][{a}]")

    def _validate_rewards(self, rewards):
        bad = np.argwhere(~np.isfinite(rewards) | (rewards < 0))
        if bad.size:
            i, s, a = bad[0]
            self._fail("rewards must be finite and nonnegative", "rewards", f"rewards[{i}][{s}][{a}]")

    def read(self):
        self._payload = self._decode()
        n_states = self._extract_count("n_states")
        n_actions = self._extract_count("n_actions")
        gamma = self._extract_scalar("gamma")
        if not 0.0 <= gamma < 1.0:
            self._fail(f"gamma must lie in [0, 1), got {gamma}", "gamma")

        rho = self._extract_table("rho", (n_states,))
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_SUM_TOL:
            self._fail(f"rho must be a distribution, sums to {rho.sum()!r}", "rho")
        kernel = self._extract_table("kernel", (n_states, n_actions, n_states))
        self._validate_kernel(kernel)
        rewards = self._extract_table("rewards", (None, n_states, n_actions))
        self._validate_rewards(rewards)
        thresholds = self._extract_table("thresholds", (rewards.shape[0] - 1,))
        if not np.all(np.isfinite(thresholds)):
            self._fail("thresholds must be finite", "thresholds")

        try:
            cmdp = TabularCmdp(kernel=kernel, rewards=rewards, thresholds=thresholds,
                               gamma=gamma, rho=rho)
        except InvalidInstanceError as e:
            raise InstanceFormatError(str(e), line=1) from e
        logger.debug(f"{self.source}: loaded |S|={n_states} |A|={n_actions} m={cmdp.m} gamma={gamma}")
        return cmdp

    @property
    def meta(self):
        if self._payload is None:
            return {}
        return dict(self._payload.get("meta", {}))


def parse_instance(text, source="<string>"):
    return InstanceReader(text, source).read()


def load_instance(path):
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return parse_instance(text, source=str(path))


def instance_document(cmdp, meta=None):
    document = {
        "n_states": cmdp.n_states,
        "n_actions": cmdp.n_actions,
        "gamma": cmdp.gamma,
        "rho": cmdp.rho.tolist(),
        "kernel": cmdp.kernel.tolist(),
        "rewards": cmdp.rewards.tolist(),
        "thresholds": cmdp.thresholds.tolist(),
    }
    if meta:
        document["meta"] = meta
    return document


def dumps_instance(cmdp, meta=None):
    return json.dumps(instance_document(cmdp, meta), indent=1) + "\n"


def dump_instance(cmdp, path, meta=None):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_instance(cmdp, meta))
    logger.info(f"wrote instance to {path}")
