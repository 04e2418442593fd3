"""Analyzing a randomized crossover learning experiment.

Simulates the canonical design: students split into two groups that swap
between quiz homework and written homework across four exams, scores driven
by a random-intercept mixed model. The analysis fits the full fixed-effect
structure, eliminates insignificant terms backward (interaction first, then
treatment), and reports the treatment contrast with a Wald interval.

Run:  python demos/crossover_analysis_demo.py
"""

from adaptivequiz import (
    CrossoverTruth,
    SimConfig,
    backward_eliminate,
    fit_terms,
    simulate_crossover,
    treatment_ci,
)

truth = CrossoverTruth(
    intercept=5.0,
    treatment_effect=0.0,   # ground truth: the quiz homework changes nothing
    math_effect=1.1,        # strong math background is worth about a point
    interaction_effect=0.0,
    exam_effects=(0.4, -0.3, 0.2),
    sigma_student=1.2,      # persistent student differences dominate
    sigma_resid=0.9,
    missing_rate=0.08,      # some students skip an exam
)
config = SimConfig(seed=42, n_students=157, crossover=truth, questions_per_student=0)
records = simulate_crossover(config)
students = {r.student_id for r in records}
print(f"{len(records)} exam scores from {len(students)} students (missingness allowed)\n")

result = backward_eliminate(records, alpha=0.05)
print("backward elimination:")
for step in result.trace:
    verdict = "dropped" if step.dropped else "retained"
    print(f"  {step.term:12s} p = {step.p_value:.3f} -> {verdict}")
print(f"final model terms: {', '.join(result.terms)}\n")

fit = result.fit
for name, est in zip(fit.fixed_names, fit.fixed):
    print(f"  {name:35s} {est:8.3f}  (se {fit.se(name):.3f})")
print(f"  student variance {fit.sigma_b2:.3f}, residual variance {fit.sigma2:.3f}")

# The treatment CI comes from the model that still includes the term.
with_treatment = fit_terms(records, ("treatment", "math", "exam"))
lo, hi = treatment_ci(with_treatment, level=0.95)
print(f"\n95% CI for quiz-minus-written effect: ({lo:.3f}, {hi:.3f})")
print("zero inside the interval: no detectable difference in learning"
      if lo <= 0 <= hi else "interval excludes zero!")
