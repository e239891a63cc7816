"""Patient-centric data model, label rules and a synthetic NLST-like cohort.

The generator stands in for restricted trial data. Each patient gets a
clinical cancer propensity that is a logistic function of documented risk
factors; cancers then leave an imaging trail (a nodule that grows towards
the diagnosis date, or a central mass). The intercept of the propensity is
calibrated so the expected share of positive one-year samples matches the
configured prevalence.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

SEXES = ("male", "female")
RACES = ("white", "black", "asian", "multiracial")
ETHNICITIES = ("not hispanic", "hispanic")
EDUCATION_LEVELS = (
    "less than high school",
    "high school graduate",
    "some college",
    "college graduate",
    "postgraduate",
)
SMOKING_STATUSES = ("current", "former")
DISEASES = (
    "emphysema",
    "copd",
    "chronic bronchitis",
    "asthma",
    "pneumonia",
    "tuberculosis",
    "diabetes",
    "hypertension",
    "heart disease",
    "stroke",
)
CANCERS = ("bladder", "breast", "colorectal", "kidney", "laryngeal", "prostate")
EXPOSURES = ("asbestos", "silica", "coal dust", "welding", "farming", "chemicals")
CARCINOGENIC_EXPOSURES = frozenset({"asbestos", "silica", "coal dust"})

LOBES = (
    "right upper lobe",
    "right middle lobe",
    "right lower lobe",
    "left upper lobe",
    "left lower lobe",
)
MARGINS = ("smooth", "lobulated", "spiculated")
ATTENUATIONS = ("solid", "part-solid", "ground-glass")
CHANGES = ("new", "stable", "grown", "shrunk", "unknown")
OPPORTUNISTIC = (
    "atelectasis",
    "pleural thickening or effusion",
    "adenopathy or mass",
    "chest wall abnormality",
    "consolidation",
    "emphysema",
    "reticular opacities or fibrosis",
    "cardiovascular abnormality",
)
EXAM_YEARS = (0, 1, 2)
HORIZONS = (1, 2, 3, 4, 5, 6)
DAYS_PER_YEAR = 365


def to_days(years: float) -> float:
    """Round a duration in years to day resolution."""
    return round(years * DAYS_PER_YEAR) / DAYS_PER_YEAR


def _check_choice(name: str, value: str, allowed: Iterable[str]) -> None:
    if value not in allowed:
        raise ValueError(f"{name}={value!r} is not one of {tuple(allowed)}")


@dataclass(frozen=True)
class Demographics:
    age: int
    sex: str
    race: str
    ethnicity: str
    height_cm: int
    weight_kg: int
    education: str

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be non-negative")
        if self.height_cm <= 0 or self.weight_kg <= 0:
            raise ValueError("height and weight must be positive")
        _check_choice("sex", self.sex, SEXES)
        _check_choice("race", self.race, RACES)
        _check_choice("ethnicity", self.ethnicity, ETHNICITIES)
        _check_choice("education", self.education, EDUCATION_LEVELS)


@dataclass(frozen=True)
class SmokingHistory:
    status: str
    cigarettes_per_day: int
    years_smoked: int
    years_since_quit: int

    def __post_init__(self):
        _check_choice("status", self.status, SMOKING_STATUSES)
        if self.cigarettes_per_day < 0 or self.years_smoked < 0 or self.years_since_quit < 0:
            raise ValueError("smoking quantities must be non-negative")
        if (self.years_since_quit == 0) != (self.status == "current"):
            raise ValueError("years_since_quit must be 0 exactly for current smokers")

    @property
    def pack_years(self) -> float:
        return self.cigarettes_per_day * self.years_smoked / 20


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    demographics: Demographics
    smoking: SmokingHistory
    disease_history: tuple[str, ...] = ()
    personal_cancer_history: tuple[str, ...] = ()
    family_lung_cancer: int = 0
    work_history: tuple[str, ...] = ()
    alcohol_drinks_per_week: int = 0

    def __post_init__(self):
        for d in self.disease_history:
            _check_choice("disease", d, DISEASES)
        for c in self.personal_cancer_history:
            _check_choice("cancer", c, CANCERS)
        for w in self.work_history:
            _check_choice("exposure", w, EXPOSURES)
        if self.family_lung_cancer < 0 or self.alcohol_drinks_per_week < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class ImagingFinding:
    kind: str
    change: str = "unknown"
    location: Optional[str] = None
    size_mm: Optional[int] = None
    margin: Optional[str] = None
    attenuation: Optional[str] = None
    abnormality: Optional[str] = None

    def __post_init__(self):
        _check_choice("change", self.change, CHANGES)
        nodule_fields = (self.location, self.size_mm, self.margin, self.attenuation)
        if self.kind == "nodule":
            if any(v is None for v in nodule_fields) or self.abnormality is not None:
                raise ValueError("nodule findings need location, size, margin and attenuation only")
            _check_choice("location", self.location, LOBES)
            _check_choice("margin", self.margin, MARGINS)
            _check_choice("attenuation", self.attenuation, ATTENUATIONS)
            if self.size_mm <= 0:
                raise ValueError("nodule size must be positive")
        elif self.kind == "opportunistic":
            if any(v is not None for v in nodule_fields):
                raise ValueError("opportunistic findings carry no nodule fields")
            _check_choice("abnormality", self.abnormality, OPPORTUNISTIC)
        else:
            raise ValueError(f"unknown finding kind {self.kind!r}")

    @classmethod
    def nodule(cls, location, size_mm, margin, attenuation, change="unknown"):
        return cls("nodule", change, location, size_mm, margin, attenuation)

    @classmethod
    def opportunistic(cls, abnormality, change="unknown"):
        return cls("opportunistic", change, abnormality=abnormality)


@dataclass(frozen=True)
class ScreeningExam:
    exam_year_index: int
    findings: tuple[ImagingFinding, ...] = ()

    def __post_init__(self):
        if self.exam_year_index not in EXAM_YEARS:
            raise ValueError(f"exam_year_index must be in {EXAM_YEARS}")

    @property
    def nodules(self) -> list[ImagingFinding]:
        return [f for f in self.findings if f.kind == "nodule"]


@dataclass(frozen=True)
class Outcome:
    cancer_confirmed_years: Optional[float]
    followup_years: float
    died_of_lung_cancer: bool = False

    def __post_init__(self):
        if self.followup_years < 0:
            raise ValueError("followup_years must be non-negative")
        if self.cancer_confirmed_years is not None:
            if self.cancer_confirmed_years < 0:
                raise ValueError("cancer_confirmed_years must be non-negative")
            if self.cancer_confirmed_years > self.followup_years:
                raise ValueError("cancer confirmation cannot come after the end of follow-up")


class Label(enum.IntEnum):
    NEGATIVE = 0
    POSITIVE = 1
    EXCLUDED = -1


def _check_horizon(horizon_n) -> None:
    if isinstance(horizon_n, bool) or not isinstance(horizon_n, (int, np.integer)):
        raise ValueError(f"horizon must be an integer, got {horizon_n!r}")
    if not 1 <= horizon_n <= 6:
        raise ValueError(f"horizon must be in [1, 6], got {horizon_n}")


def derive_label(outcome: Outcome, horizon_n: int) -> Label:
    """Ground truth for one exam at horizon ``n`` years.

    Positive needs confirmed cancer within n years and at least n years of
    follow-up; negative needs no cancer within n years, at least n years of
    follow-up and no lung-cancer death. Everything else is excluded.
    """
    _check_horizon(horizon_n)
    cancer_within = (
        outcome.cancer_confirmed_years is not None
        and outcome.cancer_confirmed_years <= horizon_n
    )
    followed = outcome.followup_years >= horizon_n
    if cancer_within and followed:
        return Label.POSITIVE
    if not cancer_within and followed and not outcome.died_of_lung_cancer:
        return Label.NEGATIVE
    return Label.EXCLUDED


@dataclass(frozen=True)
class LabeledSample:
    patient: PatientRecord
    exams: tuple[ScreeningExam, ...]
    reference_year: int
    horizon_n: int
    label: Label

    def __post_init__(self):
        _check_horizon(self.horizon_n)
        years = [e.exam_year_index for e in self.exams]
        if not years or years != sorted(years) or years[-1] != self.reference_year:
            raise ValueError("exams must be sorted and end at the reference year")

    @property
    def reference_exam(self) -> ScreeningExam:
        return self.exams[-1]


@dataclass(frozen=True)
class CohortMember:
    patient: PatientRecord
    exams: tuple[ScreeningExam, ...]
    outcomes: tuple[Outcome, ...]
    latent_risk: float

    def __post_init__(self):
        if len(self.exams) != len(self.outcomes):
            raise ValueError("one outcome per exam is required")


@dataclass(frozen=True)
class RiskCoefficients:
    """Log-odds weights of the latent risk model.

    Clinical weights drive the cancer propensity in the generator; imaging
    weights describe how suspicious the visible trail is. Both feed the
    factor-by-factor equation of the scripted teacher.
    """

    pack_years: float = 0.45  # per 20 pack-years above 30
    current_smoker: float = 0.35
    age: float = 0.30  # per 5 years above 62
    emphysema: float = 0.60
    copd: float = 0.35
    family: float = 0.55  # per affected first-degree relative
    exposure: float = 0.45  # per carcinogenic occupational exposure
    prior_cancer: float = 0.30
    nodule_base: float = 0.4
    nodule_size: float = 1.2  # per log(size / 4 mm)
    spiculated: float = 1.2
    lobulated: float = 0.5
    part_solid: float = 0.5
    ground_glass: float = 0.1
    grown: float = 1.2
    new: float = 0.6
    mass: float = 2.2
    ct_emphysema: float = 0.3
    teacher_intercept: float = -3.0


@dataclass(frozen=True)
class CohortConfig:
    size: int
    prevalence: float = 0.045
    coefficients: RiskCoefficients = field(default_factory=RiskCoefficients)
    compliance: float = 0.95
    central_cancer_rate: float = 0.15
    benign_nodule_rate: float = 0.35

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("cohort size must be positive")
        if not 0.03 <= self.prevalence <= 0.07:
            raise ValueError("prevalence must lie in [0.03, 0.07]")
        if not 0.0 < self.compliance <= 1.0:
            raise ValueError("compliance must lie in (0, 1]")


# --------------------------------------------------------------------------
# latent risk terms


def clinical_terms(patient: PatientRecord, coefs: RiskCoefficients) -> dict[str, float]:
    s = patient.smoking
    diseases = set(patient.disease_history)
    exposures = CARCINOGENIC_EXPOSURES.intersection(patient.work_history)
    return {
        "smoking": coefs.pack_years * (s.pack_years - 30) / 20
        + coefs.current_smoker * (s.status == "current"),
        "age": coefs.age * (patient.demographics.age - 62) / 5,
        "lung disease": coefs.emphysema * ("emphysema" in diseases)
        + coefs.copd * bool(diseases & {"copd", "chronic bronchitis"}),
        "family history": coefs.family * patient.family_lung_cancer,
        "exposure": coefs.exposure * len(exposures),
        "prior cancer": coefs.prior_cancer * bool(patient.personal_cancer_history),
    }


def nodule_term(finding: ImagingFinding, coefs: RiskCoefficients) -> float:
    return (
        coefs.nodule_base
        + coefs.nodule_size * math.log(max(finding.size_mm, 1) / 4)
        + coefs.spiculated * (finding.margin == "spiculated")
        + coefs.lobulated * (finding.margin == "lobulated")
        + coefs.part_solid * (finding.attenuation == "part-solid")
        + coefs.ground_glass * (finding.attenuation == "ground-glass")
        + coefs.grown * (finding.change == "grown")
        + coefs.new * (finding.change == "new")
    )


def dominant_nodule(exam: ScreeningExam, coefs: RiskCoefficients) -> Optional[ImagingFinding]:
    nodules = exam.nodules
    if not nodules:
        return None
    return max(nodules, key=lambda f: nodule_term(f, coefs))


def imaging_terms(exams: Sequence[ScreeningExam], coefs: RiskCoefficients) -> dict[str, float]:
    ref = exams[-1]
    dom = dominant_nodule(ref, coefs)
    others = {f.abnormality for f in ref.findings if f.kind == "opportunistic"}
    return {
        "nodule": nodule_term(dom, coefs) if dom is not None else 0.0,
        "other findings": coefs.mass * ("adenopathy or mass" in others)
        + coefs.ct_emphysema * ("emphysema" in others),
    }


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# --------------------------------------------------------------------------
# generator

_FOLLOWUP_END = 7.0


@dataclass
class _Draws:
    """Everything random about one patient, drawn before cancer is decided."""

    patient: PatientRecord
    clinical: float
    u_cancer: float
    tau: float
    followup: float
    died_if_cancer: bool
    death_u: float
    attend: tuple[bool, bool]
    nodule_rng_seed: int


def _draw_patient(index: int, cfg: CohortConfig, rng: np.random.Generator) -> _Draws:
    male = rng.random() < 0.59
    age = int(rng.integers(55, 75))
    height = int(round(rng.normal(177 if male else 163, 7)))
    weight = int(np.clip(round(rng.normal(88 if male else 73, 15)), 45, 160))
    demo = Demographics(
        age=age,
        sex="male" if male else "female",
        race=str(rng.choice(RACES, p=[0.90, 0.05, 0.02, 0.03])),
        ethnicity=str(rng.choice(ETHNICITIES, p=[0.98, 0.02])),
        height_cm=height,
        weight_kg=weight,
        education=str(rng.choice(EDUCATION_LEVELS, p=[0.06, 0.24, 0.23, 0.32, 0.15])),
    )
    current = rng.random() < 0.48
    cpd = int(rng.choice([10, 15, 20, 25, 30, 40, 50, 60], p=[0.04, 0.08, 0.38, 0.08, 0.2, 0.16, 0.04, 0.02]))
    years_smoked = int(rng.integers(20, min(age - 14, 56)))
    smoking = SmokingHistory(
        status="current" if current else "former",
        cigarettes_per_day=cpd,
        years_smoked=years_smoked,
        years_since_quit=0 if current else int(rng.integers(1, 16)),
    )
    disease_p = (0.08, 0.10, 0.09, 0.06, 0.15, 0.02, 0.10, 0.35, 0.12, 0.03)
    diseases = tuple(d for d, p in zip(DISEASES, disease_p) if rng.random() < p)
    cancers = tuple(c for c in CANCERS if rng.random() < 0.012)
    family = int(rng.choice(4, p=[0.78, 0.17, 0.04, 0.01]))
    exposure_p = (0.06, 0.04, 0.03, 0.08, 0.10, 0.07)
    work = tuple(w for w, p in zip(EXPOSURES, exposure_p) if rng.random() < p)
    drinks = 0 if rng.random() < 0.3 else int(rng.integers(1, 30))
    patient = PatientRecord(
        patient_id=f"p{index:06d}",
        demographics=demo,
        smoking=smoking,
        disease_history=diseases,
        personal_cancer_history=cancers,
        family_lung_cancer=family,
        work_history=work,
        alcohol_drinks_per_week=drinks,
    )
    clinical = sum(clinical_terms(patient, cfg.coefficients).values())

    followup = _FOLLOWUP_END - rng.uniform(0.0, 0.8)
    if rng.random() < 0.08:  # lost to follow-up or died of other causes
        followup = rng.uniform(0.5, followup)
    return _Draws(
        patient=patient,
        clinical=clinical,
        u_cancer=float(rng.random()),
        tau=float(rng.uniform(0.05, 6.9)),
        followup=float(followup),
        died_if_cancer=bool(rng.random() < 0.3),
        death_u=float(rng.random()),
        attend=(bool(rng.random() < cfg.compliance), bool(rng.random() < cfg.compliance)),
        nodule_rng_seed=int(rng.integers(2**63)),
    )


def _trajectory(d: _Draws, cancer: bool):
    """Exam years attended and per-exam outcomes under a cancer scenario."""
    tau = d.tau if cancer else math.inf
    observed = cancer and tau <= d.followup
    end = d.followup
    died = False
    if observed and d.died_if_cancer:
        end = tau + d.death_u * (d.followup - tau)
        died = True
    years = [0]
    for k in (1, 2):
        if d.attend[k - 1] and tau > k and end > k:
            years.append(k)
    outcomes = []
    for k in years:
        cancer_years = to_days(tau - k) if observed else None
        fu = to_days(end - k)
        if cancer_years is not None:
            cancer_years = min(cancer_years, fu)
        outcomes.append(Outcome(cancer_years, fu, died))
    return years, outcomes


def _one_year_counts(d: _Draws, cancer: bool) -> tuple[int, int]:
    _, outcomes = _trajectory(d, cancer)
    labels = [derive_label(o, 1) for o in outcomes]
    return sum(lab == Label.POSITIVE for lab in labels), sum(lab != Label.EXCLUDED for lab in labels)


def calibrate_intercept(draws: Sequence[_Draws], prevalence: float) -> float:
    clinical = np.array([d.clinical for d in draws])
    pos_c, tot_c, tot_n = (np.zeros(len(draws)) for _ in range(3))
    for i, d in enumerate(draws):
        pos_c[i], tot_c[i] = _one_year_counts(d, True)
        tot_n[i] = _one_year_counts(d, False)[1]

    def gap(b0):
        p = _sigmoid(b0 + clinical)
        expected_total = np.sum(p * tot_c + (1 - p) * tot_n)
        return np.sum(p * pos_c) / max(expected_total, 1e-12) - prevalence

    lo, hi = -20.0, 10.0
    if gap(lo) * gap(hi) > 0:
        # tiny cohorts may have no attainable positive; fall back to the edge
        return lo if abs(gap(lo)) < abs(gap(hi)) else hi
    return float(brentq(gap, lo, hi, xtol=1e-10))


def _pick(rng, options, p):
    return options[int(rng.choice(len(options), p=p))]


def _findings(d: _Draws, cancer: bool, years: list[int], cfg: CohortConfig):
    rng = np.random.default_rng(d.nodule_rng_seed)
    diseases = set(d.patient.disease_history)
    per_year: dict[int, list[ImagingFinding]] = {k: [] for k in years}

    # benign nodules: present from baseline or appearing later
    benign = []
    for _ in range(int(rng.poisson(cfg.benign_nodule_rate))):
        benign.append((0, _benign_nodule(rng)))
    for k in (1, 2):
        if rng.random() < 0.06:
            benign.append((k, _benign_nodule(rng)))
    for start, (loc, size, margin, att) in benign:
        prev_size = None
        for k in years:
            if k < start:
                continue
            if prev_size is None:
                change = "unknown" if k == 0 else "new"
            else:
                r = rng.random()
                if r < 0.07:
                    size, change = size + 2, "grown"
                elif r < 0.15 and size > 3:
                    size, change = size - 1, "shrunk"
                else:
                    change = "stable"
            per_year[k].append(ImagingFinding.nodule(loc, size, margin, att, change))
            prev_size = size

    if cancer:
        if rng.random() < cfg.central_cancer_rate:
            first = True
            for k in years:
                if d.tau - k <= 1.5:
                    per_year[k].append(ImagingFinding.opportunistic(
                        "adenopathy or mass", "unknown" if k == 0 else ("new" if first else "stable")))
                    first = False
        else:
            size_dx = rng.uniform(10, 30)
            growth = rng.uniform(0.4, 0.9)
            loc = _pick(rng, LOBES, [0.3, 0.05, 0.2, 0.3, 0.15])
            margin = _pick(rng, MARGINS, [0.15, 0.30, 0.55])
            att = _pick(rng, ATTENUATIONS, [0.55, 0.30, 0.15])
            prev = None
            for k in years:
                size = int(round(size_dx * math.exp(-growth * (d.tau - k))))
                if size < 4:
                    continue
                if prev is None:
                    change = "unknown" if k == 0 else "new"
                else:
                    change = "grown" if size - prev >= 2 else "stable"
                per_year[k].append(ImagingFinding.nodule(loc, size, margin, att, change))
                prev = size

    # opportunistic findings, mostly persistent across years
    persistent = []
    if rng.random() < (0.7 if "emphysema" in diseases else 0.1):
        persistent.append("emphysema")
    if rng.random() < 0.10:
        persistent.append("cardiovascular abnormality")
    if rng.random() < 0.04:
        persistent.append("reticular opacities or fibrosis")
    for i, k in enumerate(years):
        for a in persistent:
            per_year[k].append(ImagingFinding.opportunistic(a, "unknown" if i == 0 else "stable"))
        for a, p in (
            ("atelectasis", 0.03),
            ("pleural thickening or effusion", 0.03),
            ("consolidation", 0.03),
            ("chest wall abnormality", 0.01),
            ("adenopathy or mass", 0.015),
        ):
            if rng.random() < p and all(f.abnormality != a for f in per_year[k]):
                per_year[k].append(ImagingFinding.opportunistic(a, "unknown" if k == 0 else "new"))
    return tuple(ScreeningExam(k, tuple(per_year[k])) for k in years)


def _benign_nodule(rng):
    size = int(rng.integers(3, 8)) if rng.random() < 0.85 else int(rng.integers(8, 13))
    return (
        _pick(rng, LOBES, [0.25, 0.1, 0.25, 0.2, 0.2]),
        size,
        _pick(rng, MARGINS, [0.80, 0.17, 0.03]),
        _pick(rng, ATTENUATIONS, [0.70, 0.10, 0.20]),
    )


def synth_cohort(config: CohortConfig, rng: np.random.Generator) -> list[CohortMember]:
    """Generate ``config.size`` synthetic screening-arm patients."""
    if config.size <= 0:
        raise ValueError("cohort size must be positive")
    draws = [_draw_patient(i, config, rng) for i in range(config.size)]
    intercept = calibrate_intercept(draws, config.prevalence)
    members = []
    for d in draws:
        risk = float(_sigmoid(intercept + d.clinical))
        cancer = d.u_cancer < risk
        years, outcomes = _trajectory(d, cancer)
        exams = _findings(d, cancer, years, config)
        members.append(CohortMember(d.patient, exams, tuple(outcomes), risk))
    return members


def build_samples(cohort: Sequence[CohortMember], horizons: Iterable[int]) -> list[LabeledSample]:
    """One labeled sample per (patient, exam year, horizon), exclusions dropped."""
    horizons = sorted(set(horizons))
    for n in horizons:
        _check_horizon(n)
    samples = []
    for member in cohort:
        for i, (exam, outcome) in enumerate(zip(member.exams, member.outcomes)):
            for n in horizons:
                label = derive_label(outcome, n)
                if label is Label.EXCLUDED:
                    continue
                samples.append(LabeledSample(
                    member.patient, member.exams[: i + 1], exam.exam_year_index, n, label))
    return samples


# --------------------------------------------------------------------------
# plain-dict conversion for line-delimited record files


def patient_to_dict(p: PatientRecord) -> dict:
    s = p.smoking
    return {
        "patient_id": p.patient_id,
        "demographics": {f.name: getattr(p.demographics, f.name) for f in fields(Demographics)},
        "smoking": {
            "status": s.status,
            "cigarettes_per_day": s.cigarettes_per_day,
            "years_smoked": s.years_smoked,
            "years_since_quit": s.years_since_quit,
            "pack_years": s.pack_years,
        },
        "disease_history": list(p.disease_history),
        "personal_cancer_history": list(p.personal_cancer_history),
        "family_lung_cancer": p.family_lung_cancer,
        "work_history": list(p.work_history),
        "alcohol_drinks_per_week": p.alcohol_drinks_per_week,
    }


def patient_from_dict(d: dict) -> PatientRecord:
    smoking = dict(d["smoking"])
    smoking.pop("pack_years", None)
    return PatientRecord(
        patient_id=d["patient_id"],
        demographics=Demographics(**d["demographics"]),
        smoking=SmokingHistory(**smoking),
        disease_history=tuple(d["disease_history"]),
        personal_cancer_history=tuple(d["personal_cancer_history"]),
        family_lung_cancer=d["family_lung_cancer"],
        work_history=tuple(d["work_history"]),
        alcohol_drinks_per_week=d["alcohol_drinks_per_week"],
    )


def exam_to_dict(e: ScreeningExam) -> dict:
    return {
        "exam_year_index": e.exam_year_index,
        "findings": [
            {k: v for k, v in vars(f).items() if v is not None} for f in e.findings
        ],
    }


def exam_from_dict(d: dict) -> ScreeningExam:
    return ScreeningExam(d["exam_year_index"], tuple(ImagingFinding(**f) for f in d["findings"]))


def member_to_dict(m: CohortMember) -> dict:
    return {
        "patient": patient_to_dict(m.patient),
        "exams": [exam_to_dict(e) for e in m.exams],
        "outcomes": [vars(o).copy() for o in m.outcomes],
        "latent_risk": m.latent_risk,
    }


def member_from_dict(d: dict) -> CohortMember:
    return CohortMember(
        patient_from_dict(d["patient"]),
        tuple(exam_from_dict(e) for e in d["exams"]),
        tuple(Outcome(**o) for o in d["outcomes"]),
        d["latent_risk"],
    )
