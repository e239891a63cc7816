"""Free-text rendering of labeled samples in four deterministic styles.

Every style writes the same facts: demographics, the six history sections,
then every finding of every included exam in year order, then the question.
Numbers are written as digits. Nothing derived from the outcome is ever
written.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cohort import ImagingFinding, LabeledSample, PatientRecord, ScreeningExam


class RenderStyle(str, enum.Enum):
    TEMPLATE = "template"
    TABLE = "table"
    FREE_TEXT = "free_text"
    NARRATIVE = "narrative"


@dataclass(frozen=True)
class RenderedInput:
    text: str
    token_count: int
    style: RenderStyle
    question: str

    def __post_init__(self):
        if not self.text or not self.text.endswith(self.question):
            raise ValueError("rendered text must be non-empty and end with the question")


HORIZON_WORDS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six"}
SCAN_WORDS = {0: "baseline", 1: "first-year", 2: "second-year"}

QUESTION_BANK = (
    "what are the chances of the patient developing lung cancer within {n} {years} post-{scan} ct scan?",
    "estimate the lung cancer occurrence risk score for the {n} {years} after the {scan} ct scan.",
    "how likely is this patient to be diagnosed with lung cancer within {n} {years} of the {scan} ct scan?",
    "give the risk score of lung cancer within {n} {years} following the {scan} screening scan.",
    "what is the probability of a lung cancer diagnosis in the {n} {years} after the {scan} ct scan?",
    "assess the risk that this patient develops lung cancer within {n} {years} from the {scan} ct scan.",
)


def render_question(reference_year: int, horizon_n: int, rng: np.random.Generator,
                    bank: Sequence[str] = QUESTION_BANK) -> str:
    if horizon_n not in HORIZON_WORDS:
        raise ValueError(f"horizon must be in [1, 6], got {horizon_n}")
    if reference_year not in SCAN_WORDS:
        raise ValueError(f"reference year must be 0, 1 or 2, got {reference_year}")
    template = bank[int(rng.integers(len(bank)))]
    return template.format(
        n=HORIZON_WORDS[horizon_n],
        years="year" if horizon_n == 1 else "years",
        scan=SCAN_WORDS[reference_year],
    )


def fmt_number(x) -> str:
    """Digits with at most two decimals and no trailing zeros."""
    s = f"{float(x):.2f}".rstrip("0").rstrip(".")
    return s if s not in ("", "-0") else "0"


def _listing(items: Sequence[str]) -> str:
    return ", ".join(items) if items else "none"


def _relatives(count: int) -> str:
    if count == 0:
        return "none"
    return f"{count} first-degree {'relative' if count == 1 else 'relatives'}"


def describe_finding(f: ImagingFinding) -> str:
    if f.kind == "nodule":
        return (f"{f.size_mm} mm {f.margin} {f.attenuation} nodule in the {f.location}, "
                f"change {f.change}")
    return f"{f.abnormality}, change {f.change}"


def _exam_heading(exam: ScreeningExam) -> str:
    return f"{SCAN_WORDS[exam.exam_year_index]} ct scan (year {exam.exam_year_index})"


# --------------------------------------------------------------------------
# styles


def _template(p: PatientRecord, exams: Sequence[ScreeningExam]) -> list[str]:
    d, s = p.demographics, p.smoking
    lines = [
        f"demographics: age {d.age}, {d.sex}, {d.race}, {d.ethnicity}, height {d.height_cm} cm, "
        f"weight {d.weight_kg} kg, education {d.education}.",
        f"smoking history: {s.status} smoker, {s.cigarettes_per_day} cigarettes per day, "
        f"{s.years_smoked} years smoked, {s.years_since_quit} years since quitting, "
        f"{fmt_number(s.pack_years)} pack-years.",
        f"disease history: {_listing(p.disease_history)}.",
        f"personal cancer history: {_listing(p.personal_cancer_history)}.",
        f"family lung cancer history: {_relatives(p.family_lung_cancer)}.",
        f"work history: {_listing(p.work_history)}.",
        f"alcohol history: {p.alcohol_drinks_per_week} drinks per week.",
    ]
    for exam in exams:
        body = "; ".join(describe_finding(f) for f in exam.findings) or "no abnormal findings"
        lines.append(f"{_exam_heading(exam)}: {body}.")
    return lines


def _table(p: PatientRecord, exams: Sequence[ScreeningExam]) -> list[str]:
    d, s = p.demographics, p.smoking
    rows = [
        ("age", str(d.age)), ("sex", d.sex), ("race", d.race), ("ethnicity", d.ethnicity),
        ("height", f"{d.height_cm} cm"), ("weight", f"{d.weight_kg} kg"), ("education", d.education),
        ("smoking status", s.status), ("cigarettes per day", str(s.cigarettes_per_day)),
        ("years smoked", str(s.years_smoked)), ("years since quitting", str(s.years_since_quit)),
        ("pack-years", fmt_number(s.pack_years)),
        ("disease history", _listing(p.disease_history)),
        ("personal cancer history", _listing(p.personal_cancer_history)),
        ("family lung cancer history", _relatives(p.family_lung_cancer)),
        ("work history", _listing(p.work_history)),
        ("alcohol", f"{p.alcohol_drinks_per_week} drinks per week"),
    ]
    lines = ["| item | value |"] + [f"| {k} | {v} |" for k, v in rows]
    lines.append("| year | finding | location | size | margin | attenuation | change |")
    for exam in exams:
        y = exam.exam_year_index
        if not exam.findings:
            lines.append(f"| year {y} | no abnormal findings | - | - | - | - | - |")
        for f in exam.findings:
            if f.kind == "nodule":
                lines.append(f"| year {y} | nodule | {f.location} | {f.size_mm} mm | {f.margin} "
                             f"| {f.attenuation} | {f.change} |")
            else:
                lines.append(f"| year {y} | {f.abnormality} | - | - | - | - | {f.change} |")
    return lines


def _free_text(p: PatientRecord, exams: Sequence[ScreeningExam]) -> list[str]:
    d, s = p.demographics, p.smoking
    text = (
        f"{d.age} year old {d.race} {d.ethnicity} {d.sex}, {d.height_cm} cm and {d.weight_kg} kg, "
        f"education {d.education}. {s.status} smoker of {s.cigarettes_per_day} cigarettes per day "
        f"for {s.years_smoked} years ({fmt_number(s.pack_years)} pack-years), "
        f"quit {s.years_since_quit} years ago. "
        f"prior diseases: {_listing(p.disease_history)}. "
        f"prior cancers: {_listing(p.personal_cancer_history)}. "
        f"relatives with lung cancer: {_relatives(p.family_lung_cancer)}. "
        f"occupational exposures: {_listing(p.work_history)}. "
        f"drinks {p.alcohol_drinks_per_week} alcoholic drinks per week."
    )
    lines = [text]
    for exam in exams:
        if exam.findings:
            body = " ".join(f"there is {describe_finding(f)}." for f in exam.findings)
        else:
            body = "no abnormal findings."
        lines.append(f"year {exam.exam_year_index} scan: {body}")
    return lines


def _narrative(p: PatientRecord, exams: Sequence[ScreeningExam]) -> list[str]:
    d, s = p.demographics, p.smoking
    they = "he" if d.sex == "male" else "she"
    lines = [
        f"i am seeing a {d.age} year old {d.sex} patient, {d.race} and {d.ethnicity}, "
        f"{d.height_cm} cm tall and {d.weight_kg} kg, with education {d.education}.",
        f"{they} is a {s.status} smoker who smoked {s.cigarettes_per_day} cigarettes per day for "
        f"{s.years_smoked} years, quit {s.years_since_quit} years ago, "
        f"{fmt_number(s.pack_years)} pack-years in total.",
        f"the medical history includes {_listing(p.disease_history)}, with prior cancers: "
        f"{_listing(p.personal_cancer_history)}.",
        f"family history of lung cancer: {_relatives(p.family_lung_cancer)}. "
        f"work exposures: {_listing(p.work_history)}. "
        f"{they} reports {p.alcohol_drinks_per_week} drinks per week.",
    ]
    for exam in exams:
        if exam.findings:
            body = "; ".join(describe_finding(f) for f in exam.findings)
            lines.append(f"on the {_exam_heading(exam)} i see {body}.")
        else:
            lines.append(f"on the {_exam_heading(exam)} i see no abnormal findings.")
    return lines


_STYLES = {
    RenderStyle.TEMPLATE: _template,
    RenderStyle.TABLE: _table,
    RenderStyle.FREE_TEXT: _free_text,
    RenderStyle.NARRATIVE: _narrative,
}


def render_record(sample: LabeledSample, style: RenderStyle, rng: np.random.Generator,
                  tokenizer=None) -> RenderedInput:
    """Render one sample; ``tokenizer`` (a Vocabulary) fills ``token_count``."""
    style = RenderStyle(style)
    lines = _STYLES[style](sample.patient, sample.exams)
    question = render_question(sample.reference_year, sample.horizon_n, rng)
    text = "\n".join(lines + [question])
    if tokenizer is None:
        from .vocab import default_vocabulary

        tokenizer = default_vocabulary()
    return RenderedInput(text, len(tokenizer.encode(text)), style, question)


def pick_style(mix: Sequence[RenderStyle], rng: np.random.Generator) -> RenderStyle:
    return RenderStyle(mix[int(rng.integers(len(mix)))])
