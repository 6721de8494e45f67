import pytest

from posn.crypto import keygen, sign, verify, vrf_eval, vrf_verify


def test_keygen_deterministic():
    a = keygen(42, 3)
    b = keygen(42, 3)
    assert a.pk == b.pk and a.sk == b.sk
    assert keygen(42, 4).pk != a.pk
    assert keygen(43, 3).pk != a.pk


def test_keys_are_32_bytes():
    kp = keygen(1, 0)
    assert len(kp.pk) == 32
    assert len(kp.sk) == 32


def test_sign_verify_roundtrip():
    kp = keygen(7, 0)
    sig = sign(kp.sk, b"hello")
    assert verify(kp.pk, b"hello", sig)


def test_verify_rejects_wrong_message():
    kp = keygen(7, 0)
    sig = sign(kp.sk, b"hello")
    assert not verify(kp.pk, b"hellp", sig)


def test_verify_rejects_wrong_key():
    kp = keygen(7, 0)
    other = keygen(7, 1)
    sig = sign(kp.sk, b"hello")
    assert not verify(other.pk, b"hello", sig)


def test_verify_rejects_tampered_signature():
    kp = keygen(7, 0)
    sig = sign(kp.sk, b"hello")
    bad = type(sig)(bytes([sig.tag[0] ^ 1]) + sig.tag[1:])
    assert not verify(kp.pk, b"hello", bad)


def test_vrf_deterministic_and_verifiable():
    kp = keygen(9, 2)
    out1 = vrf_eval(kp.sk, b"alpha")
    out2 = vrf_eval(kp.sk, b"alpha")
    assert out1.value == out2.value and out1.proof == out2.proof
    assert vrf_verify(kp.pk, b"alpha", out1)


def test_vrf_distinct_inputs_distinct_values():
    kp = keygen(9, 2)
    assert vrf_eval(kp.sk, b"alpha").value != vrf_eval(kp.sk, b"beta").value


def test_vrf_verify_rejects_forgery():
    kp = keygen(9, 2)
    other = keygen(9, 3)
    out = vrf_eval(kp.sk, b"alpha")
    assert not vrf_verify(other.pk, b"alpha", out)
    assert not vrf_verify(kp.pk, b"beta", out)
    forged = type(out)(out.value, bytes(32))
    assert not vrf_verify(kp.pk, b"alpha", forged)


@pytest.mark.parametrize("n", [4, 7])
def test_distinct_validators_distinct_keys(n):
    pks = {keygen(11, i).pk for i in range(n)}
    assert len(pks) == n
