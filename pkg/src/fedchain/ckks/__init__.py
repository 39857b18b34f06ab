"""CKKS approximate homomorphic encryption, restricted to what weighted
aggregation needs: encode/decode, keys, encrypt/decrypt, ciphertext and
plaintext addition, plaintext multiplication and rescaling."""

from .encoding import decode, encode
from .errors import (
    AlignmentError,
    CapacityError,
    CkksError,
    DepthError,
    ParameterError,
    RangeError,
    SerializationError,
)
from .params import PRESETS, CkksParams, default_params, ntt_primes, preset, ring_context
from .scheme import (
    Ciphertext,
    KeyPair,
    Plaintext,
    PublicKey,
    SecretKey,
    add,
    add_plain,
    decrypt,
    drop_level,
    encrypt,
    keygen,
    mul_plain,
    rescale,
)
from .serialize import dumps, loads

__all__ = [
    "AlignmentError", "CapacityError", "CkksError", "DepthError", "ParameterError", "RangeError",
    "SerializationError", "PRESETS", "CkksParams", "default_params", "ntt_primes", "preset",
    "ring_context", "Ciphertext", "KeyPair", "Plaintext", "PublicKey", "SecretKey", "add",
    "add_plain", "decrypt", "drop_level", "encrypt", "keygen", "mul_plain", "rescale", "decode",
    "encode", "dumps", "loads",
]
