"""Adaptive quiz engine.

Grade-driven item allocation over difficulty-ranked banks, IRT calibration
of the banks from logged responses, and mixed-model analysis of randomized
crossover learning experiments, plus a synthetic-student simulator that
provides ground truth for all of it.
"""

from .allocation import AllocationPolicy, allocation_pmf, draw_item, uniform_pmf
from .bank import (
    Answer,
    BankFormatError,
    GRADE_WINDOW,
    Item,
    ItemBank,
    ResponseRecord,
    StudentState,
    empirical_difficulty,
    first_exposure_filter,
    lecture_grade,
    load_bank,
    rank_by_difficulty,
    read_log,
    record_response,
    replay,
    save_bank,
    shuffle_answers,
)
from .crossover import (
    CrossoverSchedule,
    ExamRecord,
    LmmFit,
    backward_eliminate,
    design_matrix,
    fit_lmm,
    fit_terms,
    lrt_term,
    randomize_crossover,
    read_exams_csv,
    treatment_ci,
    write_exams_csv,
)
from .irt import (
    AverageStudentReport,
    FitConfig,
    IrtModel,
    ResponseMatrix,
    average_student_report,
    chi_square_sf,
    fit,
    fit_all,
    log_likelihood,
    lrt_compare,
    prob_correct,
    select_model,
)
from .simulate import (
    CrossoverTruth,
    SimConfig,
    SimStudent,
    generate_population,
    generating_model,
    make_bank,
    run_sessions,
    simulate_crossover,
    simulate_response,
)

__version__ = "0.1.0"
