"""Deployable model bundles: one file carrying the network weights plus
everything needed to run it (environment config, schema, feature ranking,
class labels). Trainers write bundles; evaluation, the CLI survey mode, and
the HTTP service consume them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from .dataprep import FeatureSchema
from .environment import EnvConfig
from .errors import WeightFormatError
from .neuralnet import (
    PARAM_NAMES,
    Network,
    NetworkArch,
    WEIGHT_FORMAT_VERSION,
    read_container,
    write_container,
)
from .policies import FixedQueryPolicy, GreedyQPolicy, Policy

DEFAULT_CLASS_LABELS = ("negative", "positive")


@dataclass(frozen=True)
class ModelBundle:
    kind: str  # "rl" | "sl"
    net: Network
    env: EnvConfig
    schema: tuple[FeatureSchema, ...]
    feature_order: tuple[int, ...]
    class_labels: tuple[str, ...] = DEFAULT_CLASS_LABELS

    def __post_init__(self):
        if self.kind not in ("rl", "sl"):
            raise WeightFormatError(f"unknown model kind {self.kind!r}")
        if len(self.class_labels) != self.env.n_classes:
            raise WeightFormatError(
                f"{len(self.class_labels)} class labels for "
                f"{self.env.n_classes} classes"
            )

    def policy(self, masked: bool = True) -> Policy:
        if self.kind == "sl":
            return FixedQueryPolicy(self.net, self.env.kmax, self.env, self.schema)
        return GreedyQPolicy(self.net, self.env, self.schema, masked=masked)


def save_model(bundle: ModelBundle, path: str | Path) -> None:
    net = bundle.net
    header = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "kind": bundle.kind,
        "arch": net.arch.to_dict(),
        "env": bundle.env.to_dict(),
        "schema": [
            {
                "name": f.name,
                "num_categories": f.num_categories,
                "prompt": f.prompt,
                "choice_labels": list(f.choice_labels),
            }
            for f in bundle.schema
        ],
        "feature_order": list(bundle.feature_order),
        "class_labels": list(bundle.class_labels),
        "tensors": [
            {"name": name, "shape": list(net.params[name].shape),
             "dtype": str(net.params[name].dtype)}
            for name in PARAM_NAMES
        ],
    }
    write_container(path, header, [net.params[name] for name in PARAM_NAMES])


def load_model(path: str | Path) -> ModelBundle:
    header, arrays = read_container(path)
    for key in ("kind", "arch", "env", "schema", "feature_order"):
        if key not in header:
            raise WeightFormatError(f"{path}: model file is missing {key!r}")
    arch = NetworkArch.from_dict(header["arch"])
    names = [t["name"] for t in header["tensors"]]
    if names != list(PARAM_NAMES):
        raise WeightFormatError(f"{path}: unexpected tensor list {names}")
    net = Network(arch, dict(zip(names, arrays)))
    schema = tuple(
        FeatureSchema(
            name=f["name"],
            num_categories=f["num_categories"],
            prompt=f.get("prompt", ""),
            choice_labels=tuple(f.get("choice_labels", ())),
        )
        for f in header["schema"]
    )
    return ModelBundle(
        kind=header["kind"],
        net=net,
        env=EnvConfig.from_dict(header["env"]),
        schema=schema,
        feature_order=tuple(header["feature_order"]),
        class_labels=tuple(header.get("class_labels", DEFAULT_CLASS_LABELS)),
    )
