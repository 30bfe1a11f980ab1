"""Cancelable multimodal biometric templates with RS secure sketches."""

from .features import BitChannelModel, FeatureVector, SubjectPopulation, read_features, synth_population
from .pipeline import (
    SecureSketch,
    TemplateStore,
    UserKey,
    authenticate,
    enroll,
    enroll_new,
    issue_key,
    revoke_and_reissue,
    secure_sketch,
    select_bits,
)
from .rs import DecodeFailure, ReedSolomon, RsCodeParams, rs_decode, rs_encode

__version__ = "0.1.0"
