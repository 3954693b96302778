"""Material parameters and the closed-form peridynamic constants.

Everything here is a pure function of SI inputs. The influence function is
fixed at w = 1, which is what the failure constants beta/beta' assume.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class DimensionMode(enum.Enum):
    THREE_D = "3d"
    PLANE_STRESS = "plane_stress"
    PLANE_STRAIN = "plane_strain"

    @property
    def dim(self) -> int:
        """Number of spatial dofs per node."""
        return 3 if self is DimensionMode.THREE_D else 2

    @classmethod
    def parse(cls, value: "str | DimensionMode") -> "DimensionMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"3d": cls.THREE_D, "three_d": cls.THREE_D, "threed": cls.THREE_D}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown dimension mode {value!r}; expected one of "
                "'3d', 'plane_stress', 'plane_strain'"
            ) from None


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear elastic solid with a fracture energy.

    Attributes:
        young_modulus: E [Pa]
        poisson_ratio: nu, strictly inside (-1, 0.5)
        density: rho [kg/m^3]
        fracture_energy: G_c [J/m^2]; zero means zero strength
    """

    young_modulus: float
    poisson_ratio: float
    density: float
    fracture_energy: float = 0.0
    bulk_modulus: float = field(init=False)
    shear_modulus: float = field(init=False)
    lame_lambda: float = field(init=False)

    def __post_init__(self):
        E, nu = self.young_modulus, self.poisson_ratio
        if not (E > 0 and math.isfinite(E)):
            raise ValueError(f"young_modulus must be positive, got {E}")
        if not (self.density > 0 and math.isfinite(self.density)):
            raise ValueError(f"density must be positive, got {self.density}")
        if not (self.fracture_energy >= 0):
            raise ValueError(f"fracture_energy must be >= 0, got {self.fracture_energy}")
        if not (-1.0 < nu < 0.5):
            raise ValueError(f"poisson_ratio must lie in (-1, 0.5), got {nu}")
        object.__setattr__(self, "bulk_modulus", E / (3.0 * (1.0 - 2.0 * nu)))
        object.__setattr__(self, "shear_modulus", E / (2.0 * (1.0 + nu)))
        object.__setattr__(self, "lame_lambda", E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))


@dataclass(frozen=True)
class PdConstants:
    A: float
    K: float
    G: float
    mode: DimensionMode


@dataclass(frozen=True)
class FailureConstants:
    beta: float
    beta_prime: float
    s_c: float
    influence_exponent: int = 0  # w = 1 everywhere


def _check_poisson(nu: float) -> None:
    # 0.5 and 1 make the (1 - 2nu) / (1 - nu) denominators vanish
    if nu == 0.5 or nu == 1.0:
        raise ValueError(f"poisson_ratio {nu} gives a singular constant")


def derive_pd_constants(material: MaterialParams, mode: DimensionMode) -> PdConstants:
    """Return the dilatation factor A and the force-state moduli K, G for ``mode``.

    Raises:
        ValueError: singular Poisson ratio, or a ratio for which K <= 0 in this
            mode (plane strain needs nu > -1/4).
    """
    mode = DimensionMode.parse(mode)
    nu = material.poisson_ratio
    _check_poisson(nu)
    kappa, mu = material.bulk_modulus, material.shear_modulus
    if mode is DimensionMode.THREE_D:
        A, K, G = 3.0, 3.0 * kappa, 15.0 * mu
    elif mode is DimensionMode.PLANE_STRAIN:
        A, K, G = 2.0, 2.0 * kappa - (2.0 / 3.0) * mu, 8.0 * mu
    else:
        A = 2.0 * (1.0 - 2.0 * nu) / (1.0 - nu)
        K = (2.0 * kappa * (1.0 - 2.0 * nu) / (1.0 - nu)
             - (2.0 / 3.0) * mu * (1.0 + nu) * (1.0 - 3.0 * nu)
             / ((1.0 - nu) * (1.0 - 2.0 * nu)))
        G = 8.0 * mu
    if not (K > 0 and G > 0):
        raise ValueError(
            f"material (E={material.young_modulus}, nu={nu}) is not admissible "
            f"in {mode.value}: K={K}, G={G}"
        )
    return PdConstants(A=A, K=K, G=G, mode=mode)


def failure_betas(delta: float, mode: DimensionMode) -> tuple[float, float]:
    """Closed-form (beta, beta') for w = 1."""
    if DimensionMode.parse(mode) is DimensionMode.THREE_D:
        return 125.0 * delta / 1848.0, 5.0 * delta / (24.0 * math.pi)
    return 1087.0 * delta / (1250.0 * math.pi ** 2), 4.0 * delta / (5.0 * math.pi)


def critical_stretch(material: MaterialParams, delta: float, mode: DimensionMode) -> FailureConstants:
    """Critical bond stretch from the fracture energy.

    In 3D: s_c = sqrt(G_c / ((9 kappa - 15 mu) beta + 15 mu beta')).
    In 2D: s_c = sqrt(G_c / (A^2 (kappa' - 8 mu / 9) beta + 8 mu beta')), with
    kappa' = kappa + mu/9 in plane strain and kappa + (mu/9) ((1+nu)/(1-2nu))^2
    in plane stress.
    """
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    mode = DimensionMode.parse(mode)
    nu, kappa, mu = material.poisson_ratio, material.bulk_modulus, material.shear_modulus
    beta, beta_p = failure_betas(delta, mode)
    if mode is DimensionMode.THREE_D:
        denom = (9.0 * kappa - 15.0 * mu) * beta + 15.0 * mu * beta_p
    else:
        A = derive_pd_constants(material, mode).A
        if mode is DimensionMode.PLANE_STRESS:
            kappa_p = kappa + mu / 9.0 * ((1.0 + nu) / (1.0 - 2.0 * nu)) ** 2
        else:
            kappa_p = kappa + mu / 9.0
        denom = A ** 2 * (kappa_p - 8.0 * mu / 9.0) * beta + 8.0 * mu * beta_p
    if not denom > 0:
        raise ValueError(
            f"non-positive critical-stretch radicand for E={material.young_modulus}, "
            f"nu={nu}, mode={mode.value}"
        )
    return FailureConstants(beta=beta, beta_prime=beta_p,
                            s_c=math.sqrt(material.fracture_energy / denom))


def wave_speed(material: MaterialParams) -> float:
    """Dilatational wave speed sqrt((lambda + 2 mu) / rho)."""
    return math.sqrt((material.lame_lambda + 2.0 * material.shear_modulus) / material.density)


def stable_time_step(material: MaterialParams, delta: float) -> float:
    """Upper bound delta / c' on the explicit time step; pick dt strictly below it."""
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    return delta / wave_speed(material)
