"""Versioned JSON documents for worlds, partitions, models and instances."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from fractions import Fraction
import json
import logging
from pathlib import Path
from typing import Any

from ..const import (
    DOMAIN,
    FORMAT_VERSION,
    KIND_INSTANCE,
    KIND_MODEL,
    KIND_PARTITION,
    KIND_WORLD,
)
from .exceptions import CodecError, SelfSortError
from .instance_model import (
    GroupModel,
    HiddenSource,
    Instance,
    PiecewiseLinearFunction,
    World,
)
from .partition import PartitionResult
from .po_model import LearnedModel, PoTrie, PoTrieNode, format_ref, parse_ref
from .vlist import VList

_LOGGER = logging.getLogger(__name__)

Document = dict[str, Any]


def fraction_to_text(value: Fraction) -> str:
    """Exact "p/q" rendering."""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def text_to_fraction(text: str) -> Fraction:
    """Parse "p/q" (or a bare integer)."""
    if not isinstance(text, str):
        raise CodecError(f"Expected a rational string, got {text!r}")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as err:
        raise CodecError(f"Malformed rational: {text!r}") from err


def dumps(document: Mapping[str, Any]) -> str:
    """Deterministic JSON text."""
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def _header(kind: str) -> Document:
    return {"format": DOMAIN, "kind": kind, "version": FORMAT_VERSION}


def _check_header(document: Any, kind: str) -> None:
    if not isinstance(document, dict):
        raise CodecError(f"Expected a {kind} document object")
    if document.get("format") != DOMAIN or document.get("kind") != kind:
        raise CodecError(
            f"Not a {kind} document: format={document.get('format')!r}, "
            f"kind={document.get('kind')!r}"
        )
    if document.get("version") != FORMAT_VERSION:
        raise CodecError(
            f"Unsupported {kind} document version {document.get('version')!r}"
        )


class SelfSortCodec:
    """Encode and decode documents."""

    @staticmethod
    def encode_world(world: World) -> Document:
        """World to document."""
        document = _header(KIND_WORLD)
        document.update(
            n=world.n,
            mu=world.mu,
            sigma=world.sigma,
            seed=world.seed,
            groups=[
                {
                    "id": group.group_id,
                    "members": list(group.members),
                    "functions": [
                        [
                            [fraction_to_text(z), fraction_to_text(y)]
                            for z, y in f.vertices
                        ]
                        for f in group.functions
                    ],
                    "source": {
                        "kind": group.source.kind,
                        "low": fraction_to_text(group.source.low),
                        "high": fraction_to_text(group.source.high),
                        "mean": group.source.mean,
                        "sd": group.source.sd,
                        "atoms": [fraction_to_text(a) for a in group.source.atoms],
                    },
                }
                for group in world.groups
            ],
        )
        return document

    @staticmethod
    def decode_world(document: Any) -> World:
        """Document to world."""
        _check_header(document, KIND_WORLD)
        try:
            groups = []
            for entry in document["groups"]:
                source = entry["source"]
                groups.append(
                    GroupModel(
                        group_id=int(entry["id"]),
                        members=tuple(int(i) for i in entry["members"]),
                        functions=tuple(
                            PiecewiseLinearFunction(
                                tuple(
                                    (text_to_fraction(z), text_to_fraction(y))
                                    for z, y in vertices
                                )
                            )
                            for vertices in entry["functions"]
                        ),
                        source=HiddenSource(
                            kind=source["kind"],
                            low=text_to_fraction(source["low"]),
                            high=text_to_fraction(source["high"]),
                            mean=float(source["mean"]),
                            sd=float(source["sd"]),
                            atoms=tuple(text_to_fraction(a) for a in source["atoms"]),
                        ),
                    )
                )
            seed = document.get("seed")
            return World(
                n=int(document["n"]),
                mu=int(document["mu"]),
                sigma=int(document["sigma"]),
                groups=tuple(groups),
                seed=None if seed is None else int(seed),
            )
        except CodecError:
            raise
        except (KeyError, TypeError, ValueError, SelfSortError) as err:
            raise CodecError(f"Malformed world document: {err}") from err

    @staticmethod
    def encode_partition(partition: PartitionResult) -> Document:
        """Partition to document."""
        document = _header(KIND_PARTITION)
        document.update(
            groups=[list(group) for group in partition.groups],
            statistics=(
                [list(row) for row in partition.statistics]
                if partition.statistics is not None
                else None
            ),
            samples=partition.samples,
            threshold=partition.threshold,
        )
        return document

    @staticmethod
    def decode_partition(document: Any) -> PartitionResult:
        """Document to partition."""
        _check_header(document, KIND_PARTITION)
        try:
            statistics = document.get("statistics")
            return PartitionResult(
                groups=tuple(tuple(int(i) for i in g) for g in document["groups"]),
                statistics=(
                    tuple(tuple(int(x) for x in row) for row in statistics)
                    if statistics is not None
                    else None
                ),
                samples=int(document["samples"]),
                threshold=int(document["threshold"]),
            )
        except (KeyError, TypeError, ValueError, SelfSortError) as err:
            raise CodecError(f"Malformed partition document: {err}") from err

    @staticmethod
    def encode_model(model: LearnedModel) -> Document:
        """Learned model to document."""
        document = _header(KIND_MODEL)
        document.update(
            n=model.n,
            mu=model.mu,
            sigma=model.sigma,
            samples=model.samples,
            required=model.required,
            rho=model.rho,
            provenance=dict(model.provenance),
            partition=SelfSortCodec.encode_partition(model.partition),
            landmarks=list(model.vlist.landmarks),
            groups=[
                {
                    "members": list(trie.members),
                    "trie": _encode_node(trie.root, trie.samples),
                }
                for trie in model.tries
            ],
        )
        return document

    @staticmethod
    def decode_model(document: Any) -> LearnedModel:
        """Document to learned model."""
        _check_header(document, KIND_MODEL)
        try:
            n = int(document["n"])
            vlist = VList(tuple(float(x) for x in document["landmarks"]))
            tries = []
            for entry in document["groups"]:
                members = tuple(int(i) for i in entry["members"])
                root = entry["trie"]
                total = int(root["count"])
                counts: dict[tuple[int, ...], int] = {}
                _collect_leaves(root, (), len(members), total, counts, is_root=True)
                tries.append(PoTrie(members, n, counts))
            return LearnedModel(
                n=n,
                mu=int(document["mu"]),
                sigma=int(document["sigma"]),
                partition=SelfSortCodec.decode_partition(document["partition"]),
                vlist=vlist,
                tries=tuple(tries),
                samples=int(document["samples"]),
                required=int(document["required"]),
                rho=float(document["rho"]),
                provenance=dict(document.get("provenance", {})),
            )
        except CodecError:
            raise
        except (KeyError, TypeError, ValueError, SelfSortError) as err:
            raise CodecError(f"Malformed model document: {err}") from err

    @staticmethod
    def encode_instance(instance: Instance) -> Document:
        """Instance to document."""
        document = _header(KIND_INSTANCE)
        document["values"] = list(instance.values)
        if instance.hidden is not None:
            document["hidden"] = list(instance.hidden)
        return document

    @staticmethod
    def decode_instance(document: Any) -> Instance:
        """Document, or a bare list of values, to instance."""
        if isinstance(document, list):
            document = {**_header(KIND_INSTANCE), "values": document}
        _check_header(document, KIND_INSTANCE)
        try:
            hidden = document.get("hidden")
            return Instance(
                tuple(float(v) for v in document["values"]),
                None if hidden is None else tuple(float(z) for z in hidden),
            )
        except (KeyError, TypeError, ValueError, SelfSortError) as err:
            raise CodecError(f"Malformed instance document: {err}") from err


def _encode_node(node: PoTrieNode, total: int) -> Document:
    encoded: Document = {"count": node.count, "weight": f"{node.count}/{total}"}
    if node.ref is not None:
        encoded["ref"] = format_ref(node.ref)
    if node.ordered:
        encoded["children"] = [_encode_node(child, total) for child in node.ordered]
    return encoded


def _collect_leaves(
    node: Document,
    prefix: tuple[int, ...],
    size: int,
    total: int,
    counts: dict[tuple[int, ...], int],
    *,
    is_root: bool = False,
) -> None:
    count = int(node["count"])
    if node.get("weight") != f"{count}/{total}":
        weight = node.get("weight")
        raise CodecError(f"Trie weight {weight!r} disagrees with count {count}")
    if not is_root:
        prefix = (*prefix, parse_ref(node["ref"]))
    children = node.get("children", [])
    if len(prefix) == size:
        if children:
            raise CodecError(f"Trie path longer than group size {size}")
        counts[prefix] = count
        return
    if not children or sum(int(c["count"]) for c in children) != count:
        raise CodecError(f"Trie node counts do not add up at depth {len(prefix)}")
    for child in children:
        _collect_leaves(child, prefix, size, total, counts)


def save_document(document: Mapping[str, Any], path: Path) -> None:
    """Write a document deterministically."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(document), encoding="utf-8")
    _LOGGER.debug("Wrote %s document to %s", document.get("kind"), path)


def load_document(path: Path) -> Any:
    """Read a JSON document."""
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise CodecError(f"Cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise CodecError(f"Corrupted JSON in {path}: {err}") from err


def save_instances(instances: Iterable[Instance], path: Path) -> None:
    """Write instances as JSON lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(SelfSortCodec.encode_instance(i), sort_keys=True) for i in instances
    ]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_instances(path: Path) -> list[Instance]:
    """Read a JSON-lines instance stream."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise CodecError(f"Cannot read {path}: {err}") from err
    instances = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            document = json.loads(line)
        except json.JSONDecodeError as err:
            raise CodecError(f"{path}:{number}: corrupted JSON: {err}") from err
        instances.append(SelfSortCodec.decode_instance(document))
    return instances
