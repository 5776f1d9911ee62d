"""Large-universe key-policy attribute-based encryption from lattices.

A desk-scale implementation: exact Z_q linear algebra, discrete Gaussian
sampling, gadget trapdoors with preimage sampling, LSSS policies, and the
Setup/KeyGen/Encrypt/Decrypt pipeline. Parameters are far too small for real
security; the package is for experimentation and testing.
"""

from .lsss import PolicySyntaxError, Unauthorized, compile_lsss, parse_policy
from .params import ParameterError, SystemParams, noise_budget_check, select_params
from .sampling import RandomSource
from .scheme import (
    Ciphertext, MasterSecretKey, PublicParams, UserSecretKey, decrypt, decrypt_bytes, encrypt,
    encrypt_bytes, keygen, setup,
)
from .serialize import FormatError

__version__ = "0.1.0"

__all__ = [
    "Ciphertext", "FormatError", "MasterSecretKey", "ParameterError", "PolicySyntaxError",
    "PublicParams", "RandomSource", "SystemParams", "Unauthorized", "UserSecretKey",
    "compile_lsss", "decrypt", "decrypt_bytes", "encrypt", "encrypt_bytes", "keygen",
    "noise_budget_check", "parse_policy", "select_params", "setup",
]
