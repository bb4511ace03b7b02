"""SFA features + prototypical network as one fitted object, saved as a bundle directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dpsn import sfa
from dpsn.errors import DataError
from dpsn.protonet import ProtoModel, TrainConfig, train
from dpsn.tscore import Dataset

SFA_FILE = "sfa.json"
NET_FILE = "net.json"
PROTO_FILE = "prototypes.json"


@dataclass(eq=False)
class DpsnModel:
    sfa: sfa.SfaModel
    proto: ProtoModel

    @classmethod
    def fit(cls, data: Dataset, params: sfa.SfaParams, cfg: TrainConfig,
            loss_log: list | None = None) -> "DpsnModel":
        model, features = sfa.fit(data, params)
        net, protos = train(features, data.labels, cfg, n_classes=data.n_classes, loss_log=loss_log)
        return cls(model, ProtoModel(net, protos, data.classes, cfg))

    def features(self, data: Dataset) -> np.ndarray:
        return self.sfa.transform(data)

    def predict_codes(self, data: Dataset) -> np.ndarray:
        return np.asarray(self.proto.predict(self.features(data)), dtype=np.int64)

    def predict(self, data: Dataset) -> list:
        """Original class labels for every series in ``data``."""
        return [self.proto.classes[c] for c in self.predict_codes(data)]

    def check(self) -> None:
        if self.sfa.dim != self.proto.net.input_dim:
            raise DataError(
                f"bundle mismatch: SFA vocabulary has D={self.sfa.dim} but the network expects "
                f"D={self.proto.net.input_dim}"
            )

    def save(self, bundle) -> Path:
        bundle = Path(bundle)
        bundle.mkdir(parents=True, exist_ok=True)
        self.sfa.save(bundle / SFA_FILE)
        self.proto.save(bundle / NET_FILE, bundle / PROTO_FILE)
        return bundle

    @classmethod
    def load(cls, bundle) -> "DpsnModel":
        bundle = Path(bundle)
        try:
            model = cls(sfa.SfaModel.load(bundle / SFA_FILE),
                        ProtoModel.load(bundle / NET_FILE, bundle / PROTO_FILE))
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load model bundle {bundle}: {exc}") from exc
        model.check()
        return model


def label_codes(test: Dataset, classes) -> np.ndarray:
    """Codes of ``test`` labels in the class order of a fitted model (-1 if unknown)."""
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index.get(test.classes[ts.label], -1) for ts in test.series], dtype=np.int64)
