"""Single-modality class prediction and the classification-rate metric."""

from typing import NamedTuple

import numpy as np

from .model import project

__all__ = ["Prediction", "predict", "predict_many", "classification_rate", "evaluate"]

MODALITIES = ("image", "text")


class Prediction(NamedTuple):
    scores: np.ndarray
    predicted_class: int


def _omega(model, modality):
    if modality == "image":
        return model.omega_image
    if modality == "text":
        return model.omega_text
    raise ValueError(f"unknown modality {modality!r}; expected 'image' or 'text'")


def predict_many(features, modality, model):
    """Scores ``(x Omega) W`` for a batch of row vectors and their argmax.

    ``np.argmax`` returns the first index on exact ties, which is the
    documented tie-break.
    """
    omega = _omega(model, modality)
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != omega.shape[0]:
        raise ValueError(
            f"{modality} features have length {x.shape[1]}, expected {omega.shape[0]}"
        )
    scores = project(x, omega) @ model.w
    return scores, np.argmax(scores, axis=1)


def predict(features, modality, model):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict expects a single feature vector")
    scores, cls = predict_many(x[None, :], modality, model)
    return Prediction(scores[0], int(cls[0]))


def classification_rate(predictions, truths):
    """Fraction of classification events whose predicted class is the truth.

    ``predictions`` may hold :class:`Prediction` objects or bare class
    indices. Callers evaluating documents pass both the image and the text
    prediction of every document, so each document counts twice.
    """
    if len(predictions) != len(truths):
        raise ValueError(
            f"{len(predictions)} predictions but {len(truths)} ground-truth labels"
        )
    if len(predictions) == 0:
        raise ValueError("classification rate of an empty prediction list")
    predicted = np.array(
        [p.predicted_class if isinstance(p, Prediction) else int(p) for p in predictions]
    )
    return float(np.mean(predicted == np.asarray(truths)))


def evaluate(model, dataset):
    """Classification rate over the image and text of every document."""
    _, img = predict_many(dataset.images, "image", model)
    _, txt = predict_many(dataset.texts, "text", model)
    truths = np.concatenate([dataset.classes, dataset.classes])
    return classification_rate(np.concatenate([img, txt]), truths)
