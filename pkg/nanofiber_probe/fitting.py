"""
Least-squares fitting engine and the fit models used on transmission traces,
lifetime decays, saturation curves and OD spectra.
"""
import logging
import math

import attrs
import numpy as np
from scipy.optimize import least_squares

from nanofiber_probe.constants import MICROSECOND
from nanofiber_probe.errors import FitError

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
MAX_EVALUATIONS = 10_000
# Normal matrices with a larger condition estimate are treated as singular.
SINGULAR_CONDITION = 1e14

INITIAL_WINDOW = (0.0, 10.0 * MICROSECOND)
LONG_WINDOW = (10.0 * MICROSECOND, 500.0 * MICROSECOND)

_CLIP = 1e-12


@attrs.frozen
class FitModel:
    """y = function(x, *parameters) with box bounds and a closed-form initial guess."""

    name: str
    parameter_names: tuple
    function: object = attrs.field(eq=False, repr=False)
    initial_guess: object = attrs.field(eq=False, repr=False)
    lower: tuple
    upper: tuple
    notes: str = ""

    def __call__(self, x, *parameters):
        return self.function(np.asarray(x, dtype=float), *parameters)


@attrs.frozen
class FitResult:
    model: str
    parameter_names: tuple
    parameters: np.ndarray = attrs.field(eq=False)
    uncertainties: np.ndarray = attrs.field(eq=False)
    residual_norm: float
    converged: bool
    iterations: int
    reason: str = ""
    at_bound: tuple = ()
    window: tuple | None = None

    def __getitem__(self, name):
        return float(self.parameters[self.parameter_names.index(name)])

    def uncertainty(self, name):
        return float(self.uncertainties[self.parameter_names.index(name)])


def _clip_transmission(y):
    return np.clip(y, _CLIP, 1.0 - _CLIP)


def _double_exp(t, od0, gamma):
    return np.exp(-od0 * np.exp(-gamma * t))


def _double_exp_guess(t, y):
    # ln(-ln y) = ln OD0 - gamma t
    z = np.log(-np.log(_clip_transmission(y)))
    span = t[-1] - t[0]
    gamma = max(-(z[-1] - z[0]) / span, 1e-3 / span)
    od0 = math.exp(z[0] + gamma * t[0])
    return [od0, gamma]


def model_double_exp():
    return FitModel(
        name="double_exp",
        parameter_names=("od0", "gamma"),
        function=_double_exp,
        initial_guess=_double_exp_guess,
        lower=(0.0, 0.0),
        upper=(np.inf, np.inf),
    )


def _exp_lifetime(t, od0, tau):
    return od0 * np.exp(-t / tau)


def _exp_lifetime_guess(t, y):
    logs = np.log(np.clip(y, _CLIP, None))
    slope = (logs[-1] - logs[0]) / (t[-1] - t[0])
    tau = -1.0 / slope if slope < 0 else 10.0 * (t[-1] - t[0])
    return [math.exp(logs[0] + t[0] / tau), tau]


def model_exp_lifetime():
    return FitModel(
        name="exp_lifetime",
        parameter_names=("od0", "tau"),
        function=_exp_lifetime,
        initial_guess=_exp_lifetime_guess,
        lower=(0.0, 0.0),
        upper=(np.inf, np.inf),
    )


def _saturation(p, p_max, p_c):
    return p_max * -np.expm1(-p / p_c)


def _rise_guess(x, y):
    """Amplitude and 1 - 1/e crossing of a rising curve."""
    amplitude = float(np.max(y))
    running = np.maximum.accumulate(y)
    crossing = float(x[np.argmax(running >= amplitude * -math.expm1(-1.0))])
    if crossing <= 0:
        crossing = float(x[x > 0][0]) if np.any(x > 0) else 1.0
    return amplitude, crossing


def _saturation_guess(p, y):
    amplitude, crossing = _rise_guess(p, y)
    return [amplitude, crossing]


def model_saturation_absorption():
    return FitModel(
        name="saturation_absorption",
        parameter_names=("p_max", "p_c"),
        function=_saturation,
        initial_guess=_saturation_guess,
        lower=(0.0, 0.0),
        upper=(np.inf, np.inf),
        notes="form P_max (1 - exp(-P_in / P_c)); P_c is a nuisance parameter",
    )


def model_od_spectrum(linewidth):
    """Saturated Lorentzian exp(-OD0 / (1 + s + (2 delta / Gamma)^2)) at fixed Gamma."""

    def spectrum(delta, od0, s):
        return np.exp(-od0 / (1.0 + s + (2.0 * delta / linewidth) ** 2))

    def guess(delta, y):
        od = -np.log(_clip_transmission(y))
        peak = float(od.max())
        wide = np.abs(delta[od >= 0.5 * peak])
        half_width = float(wide.max()) if wide.size else 0.5 * linewidth
        s = max((2.0 * half_width / linewidth) ** 2 - 1.0, 0.05)
        return [peak * (1.0 + s), s]

    return FitModel(
        name="od_spectrum",
        parameter_names=("od0", "s"),
        function=spectrum,
        initial_guess=guess,
        lower=(0.0, 0.0),
        upper=(np.inf, np.inf),
        notes="saturated Lorentzian without probe broadening; linewidth fixed",
    )


def _exp_approach(t, y_max, rate):
    return y_max * -np.expm1(-rate * t)


def _exp_approach_guess(t, y):
    amplitude, crossing = _rise_guess(t, y)
    return [amplitude, 1.0 / crossing]


def model_exp_approach():
    return FitModel(
        name="exp_approach",
        parameter_names=("y_max", "rate"),
        function=_exp_approach,
        initial_guess=_exp_approach_guess,
        lower=(0.0, 0.0),
        upper=(np.inf, np.inf),
    )


MODELS = {
    "double_exp": model_double_exp,
    "exp_lifetime": model_exp_lifetime,
    "saturation_absorption": model_saturation_absorption,
    "od_spectrum": model_od_spectrum,
    "exp_approach": model_exp_approach,
}


def select_window(x, y, window):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        return x, y
    lower, upper = window
    slack = 1e-9 * max(abs(lower), abs(upper), 1e-300)
    mask = (x >= lower - slack) & (x <= upper + slack)
    return x[mask], y[mask]


def fit(model, x, y, initial=None, window=None):
    """Trust-region least squares, parameters scaled by the initial guess and residuals by max |y|.

    initial maps parameter names to starting values and overrides the
    model's closed-form guess.
    """
    x, y = select_window(x, y, window)
    count = len(model.parameter_names)
    if len(x) < count:
        raise ValueError(f"{model.name} needs at least {count} points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("abscissa must be strictly increasing")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data contain non-finite values")

    p0 = np.array(model.initial_guess(x, y), dtype=float)
    for name, value in (initial or {}).items():
        p0[model.parameter_names.index(name)] = value
    lower = np.array(model.lower, dtype=float)
    upper = np.array(model.upper, dtype=float)
    p0 = np.clip(p0, lower, upper)
    scale = np.where(np.abs(p0) > 0, np.abs(p0), 1.0)
    y_scale = float(np.max(np.abs(y))) or 1.0

    def residuals(q):
        return (model(x, *(q * scale)) - y) / y_scale

    result = least_squares(
        residuals,
        p0 / scale,
        bounds=(lower / scale, upper / scale),
        method="trf",
        xtol=TOLERANCE,
        ftol=TOLERANCE,
        gtol=TOLERANCE,
        max_nfev=MAX_EVALUATIONS,
    )
    parameters = result.x * scale
    normal = result.jac.T @ result.jac
    condition = float(np.linalg.cond(normal))
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise FitError(f"{model.name}: singular local model", condition)

    dof = len(x) - count
    if dof > 0:
        covariance = np.linalg.inv(normal) * np.outer(scale, scale) * (2.0 * result.cost / dof)
        uncertainties = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    else:
        uncertainties = np.full(count, np.inf)

    converged = result.status > 0
    at_bound = tuple(
        name for name, flag in zip(model.parameter_names, result.active_mask) if flag != 0
    )
    fitted = FitResult(
        model=model.name,
        parameter_names=model.parameter_names,
        parameters=parameters,
        uncertainties=uncertainties,
        residual_norm=float(np.linalg.norm(result.fun)) * y_scale,
        converged=converged,
        iterations=int(result.nfev),
        reason="" if converged else result.message,
        at_bound=at_bound,
        window=None if window is None else tuple(window),
    )
    if not converged:
        logger.warning("%s fit did not converge: %s", model.name, result.message)
    return fitted


def rms_residual(model, result, x, y):
    x, y = select_window(x, y, result.window)
    return float(np.sqrt(np.mean((model(x, *result.parameters) - y) ** 2)))


@attrs.frozen
class FlankMetrics:
    gamma_initial: float
    gamma: float
    delta_od_initial: float
    od0_long: float
    initial_fit: FitResult = attrs.field(eq=False, repr=False)
    long_fit: FitResult = attrs.field(eq=False, repr=False)

    @property
    def ratio(self):
        return self.gamma_initial / self.gamma if self.gamma > 0 else math.inf


def extract_flank_metrics(trace):
    """gamma_ini from 0-10 us, gamma and OD0 from 10-500 us, and the initial-flank excess.

    trace is anything with probe_time (s, starting at the probe onset) and
    transmission arrays.
    """
    t = np.asarray(trace.probe_time, dtype=float)
    y = np.asarray(trace.transmission, dtype=float)
    if len(t) == 0 or t[-1] < LONG_WINDOW[1] * (1.0 - 1e-9):
        covered = t[-1] if len(t) else 0.0
        raise ValueError(
            f"flank analysis needs {LONG_WINDOW[1] / MICROSECOND:.0f} us of probe time, "
            f"trace covers {covered / MICROSECOND:.1f} us"
        )
    model = model_double_exp()
    initial_fit = fit(model, t, y, window=INITIAL_WINDOW)
    long_fit = fit(model, t, y, window=LONG_WINDOW)
    od0_long = long_fit["od0"]
    delta = -math.log(max(y[0], _CLIP)) - od0_long
    return FlankMetrics(
        gamma_initial=initial_fit["gamma"],
        gamma=long_fit["gamma"],
        delta_od_initial=delta,
        od0_long=od0_long,
        initial_fit=initial_fit,
        long_fit=long_fit,
    )


def fit_report(result, notes=""):
    """Structured record of a fit, ready for JSON."""
    return {
        "model": result.model,
        "parameters": dict(zip(result.parameter_names, map(float, result.parameters))),
        "uncertainties": dict(zip(result.parameter_names, map(float, result.uncertainties))),
        "residual_norm": result.residual_norm,
        "converged": result.converged,
        "iterations": result.iterations,
        "reason": result.reason,
        "at_bound": list(result.at_bound),
        "window": None if result.window is None else list(result.window),
        "notes": notes,
    }
