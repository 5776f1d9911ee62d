"""Command-line interface.

    lattice-abe params --n 4 --L 2 --profile toy --out params.bin
    lattice-abe setup --params params.bin --pp pp.bin --msk msk.bin
    lattice-abe keygen --pp pp.bin --msk msk.bin --policy "a AND b" --out sk.bin
    lattice-abe encrypt --pp pp.bin --attrs a,b --in msg.txt --out ct.bin
    lattice-abe decrypt --pp pp.bin --sk sk.bin --in ct.bin --out msg.out
    lattice-abe policy-inspect --policy "a AND (b OR c)"

Exit codes: 0 success, 2 bad parameters or usage, 3 policy not satisfied,
4 malformed or mismatched input file, 5 policy syntax error, 1 anything else.
Outputs are written to a temporary file and renamed into place, so a failed
command never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

from . import scheme
from .lsss import (
    PolicySyntaxError, Unauthorized, compile_lsss, format_policy, parse_policy,
)
from .params import PROFILES, ParameterError, select_params
from .sampling import RandomSource
from .serialize import (
    FormatError, check_user_key, decode_ciphertexts, decode_master, decode_params,
    decode_public, decode_user_key, encode_ciphertexts, encode_master, encode_params,
    encode_public, encode_user_key,
)
from .zq import DimensionError, Modulus, centered

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARAMS = 2
EXIT_UNAUTHORIZED = 3
EXIT_FORMAT = 4
EXIT_SYNTAX = 5

# display modulus for policy-inspect when no parameter file is given
_INSPECT_Q = (1 << 61) - 1


class UsageError(Exception):
    pass


def _rng(args, label: str) -> RandomSource:
    try:
        rng = RandomSource.from_hex(args.seed)
    except ValueError as exc:
        raise UsageError(f"--seed: {exc}") from None
    return rng.fork(label) if rng.seeded else rng


def _read(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def write_atomic(path: str, data: bytes, private: bool = False):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".labe-", dir=directory)
    try:
        if private:
            os.chmod(tmp, 0o600)
        else:
            mask = os.umask(0)
            os.umask(mask)
            os.chmod(tmp, 0o666 & ~mask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _check_paths(inputs: list[str], outputs: list[str]):
    real_in = {os.path.realpath(p) for p in inputs if p}
    seen = set()
    for p in outputs:
        rp = os.path.realpath(p)
        if rp in real_in:
            raise UsageError(f"output {p} would overwrite an input file")
        if rp in seen:
            raise UsageError(f"output {p} given twice")
        seen.add(rp)


def parse_attrs(text: str) -> list[str]:
    """Comma-separated list, trimmed and deduplicated in first-seen order."""
    out: list[str] = []
    for part in text.split(","):
        part = part.strip()
        if part and part not in out:
            out.append(part)
    if not out:
        raise UsageError("--attrs must name at least one attribute")
    return out


def _print_table(rows):
    width = max(len(str(k)) for k, _ in rows)
    for k, v in rows:
        print(f"{str(k):<{width}}  {v}")


# -- commands ----------------------------------------------------------------

def cmd_params(args) -> int:
    params = select_params(args.n, args.L, args.profile)
    _print_table(list(params.summary().items()))
    if args.out:
        write_atomic(args.out, encode_params(params))
    return EXIT_OK


def cmd_setup(args) -> int:
    _check_paths([args.params], [args.pp, args.msk])
    params = decode_params(_read(args.params))
    pp, msk = scheme.setup(params, _rng(args, "setup"))
    write_atomic(args.msk, encode_master(msk), private=True)
    write_atomic(args.pp, encode_public(pp))
    return EXIT_OK


def _load_pp_msk(args):
    pp = decode_public(_read(args.pp))
    msk = decode_master(_read(args.msk))
    if msk.t_a0.matrix_a != pp.a0:
        raise FormatError("master key does not belong to these public parameters")
    return pp, msk


def cmd_keygen(args) -> int:
    _check_paths([args.pp, args.msk], [args.out])
    ast = parse_policy(args.policy)
    pp, msk = _load_pp_msk(args)
    policy = compile_lsss(ast, pp.modulus)
    if policy.l > pp.params.cap_l:
        raise ParameterError(f"policy has {policy.l} leaves but the row budget L is "
                             f"{pp.params.cap_l}")
    sk = scheme.keygen(pp, msk, policy.padded(pp.params.cap_l), _rng(args, "keygen"))
    write_atomic(args.out, encode_user_key(sk), private=True)
    return EXIT_OK


def cmd_encrypt(args) -> int:
    _check_paths([args.pp, args.input], [args.out])
    attrs = parse_attrs(args.attrs)
    pp = decode_public(_read(args.pp))
    payload = _read(args.input)
    if len(payload) > scheme.MAX_PAYLOAD:
        raise UsageError(f"payload exceeds {scheme.MAX_PAYLOAD} bytes")
    cts = scheme.encrypt_bits(pp, attrs, payload, _rng(args, "encrypt"), args.zero_noise)
    write_atomic(args.out, encode_ciphertexts(cts))
    return EXIT_OK


def cmd_decrypt(args) -> int:
    _check_paths([args.pp, args.sk, args.input], [args.out])
    pp = decode_public(_read(args.pp))
    sk = decode_user_key(_read(args.sk))
    check_user_key(pp, sk)
    cts = decode_ciphertexts(_read(args.input), pp)
    write_atomic(args.out, scheme.decrypt_bits(pp, sk, cts))
    return EXIT_OK


def cmd_policy_inspect(args) -> int:
    ast = parse_policy(args.policy)
    modulus = decode_params(_read(args.params)).q if args.params else Modulus(_INSPECT_Q)
    policy = compile_lsss(ast, modulus)
    q = modulus.q
    print(f"policy  {format_policy(ast)}")
    print(f"l       {policy.l}")
    print(f"n_cols  {policy.n_cols}")
    width = max(len(r) for r in policy.rho)
    for i, (label, row) in enumerate(zip(policy.rho, policy.matrix_m.entries)):
        cells = " ".join(f"{centered(x, q):>3}" for x in row)
        print(f"row {i + 1}: rho={label:<{width}}  [{cells}]")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lattice-abe",
        description="Key-policy attribute-based encryption from lattices (desk-scale toy).")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", help="64 hex chars; makes the run deterministic (testing only)")

    p = sub.add_parser("params", help="select system parameters")
    p.add_argument("--n", type=int, required=True, help="lattice dimension")
    p.add_argument("--L", type=int, required=True, help="maximum number of policy rows")
    p.add_argument("--profile", choices=PROFILES, default="toy")
    p.add_argument("--out", help="write the parameter file here")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("setup", help="generate public parameters and master key")
    p.add_argument("--params", required=True)
    p.add_argument("--pp", required=True, help="output public parameters")
    p.add_argument("--msk", required=True, help="output master key (mode 0600)")
    seeded(p)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("keygen", help="issue a user key for a policy")
    p.add_argument("--pp", required=True)
    p.add_argument("--msk", required=True)
    p.add_argument("--policy", required=True, help='e.g. "a AND (b OR c)"')
    p.add_argument("--out", required=True, help="output user key")
    seeded(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt", help="encrypt a file under an attribute set")
    p.add_argument("--pp", required=True)
    p.add_argument("--attrs", required=True, help="comma-separated attribute list")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--zero-noise", action="store_true", help=argparse.SUPPRESS)
    seeded(p)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="decrypt a ciphertext file with a user key")
    p.add_argument("--pp", required=True)
    p.add_argument("--sk", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("policy-inspect", help="show the share-generating matrix of a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--params", help="reduce entries modulo this parameter file's q")
    p.set_defaults(func=cmd_policy_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Unauthorized:
        print("error: policy not satisfied", file=sys.stderr)
        return EXIT_UNAUTHORIZED
    except PolicySyntaxError as exc:
        print(f"error: policy syntax error: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ParameterError, UsageError, DimensionError, scheme.ReservedAttribute) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
