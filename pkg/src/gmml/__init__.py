"""Likelihood landscapes of equal-weight Gaussian mixtures."""

from gmml.mixture import (
    LabeledSample,
    MixtureModel,
    Responsibilities,
    log_gaussian_pdf,
    log_mixture_density,
    log_mixture_density_batch,
    min_separation,
    responsibilities,
    responsibility_matrix,
    sample,
    sample_log_likelihood,
    sample_points,
)

from gmml.quadrature import (
    QuadratureSpec,
    UnsupportedDimensionError,
    cross_validate,
    expect_under_mixture,
)

from gmml.population import (
    PopulationTerms,
    WeightMoments,
    expected_log_likelihood_limit,
    population_batch,
    population_gradient,
    population_hessian,
    population_log_likelihood,
    population_terms,
    q_matrix,
    weight_moments,
)

from gmml.em import (
    INDETERMINATE,
    LOCAL_MAXIMUM,
    STRICT_SADDLE,
    CriticalPointReport,
    EmTrajectory,
    FirstOrderEm,
    PopulationEm,
    SampleEm,
    Stepper,
    StoppingRule,
    classify_critical_point,
    em_step_population,
    em_step_sample,
    first_order_em_step,
    jacobian_min_eigenvalue,
    make_stepper,
    run,
    trajectory_to_csv,
)

from gmml.constructions import (
    DiffuseSpec,
    Interval,
    ThreeComponentSpec,
    TreeConstructionSpec,
    Urn,
    UrnPartition,
    construct,
    count_in_urns,
    extended_m_construction,
    make_diffuse,
    pruned_leaf_paths,
    pruned_tree,
    region_d_contains,
    three_component,
    tree_center,
    tree_construction,
    tree_leaf_paths,
    urns_at_level,
    validate_diffuse,
)

from gmml.landscape import BoundaryValues, SurfaceGrid, boundary_values, find_critical_points, surface_grid

from gmml.initialization import (
    InitClassification,
    classify_init,
    enumerate_good_init_probability,
    event_e_holds,
    event_e_probability,
    exact_good_init_probability,
    good_init_recursion_bound,
    random_init,
)

from gmml.experiments import (
    McSummary,
    SaddleSummary,
    TrappingResult,
    TrialRecord,
    mc_failure_rate,
    run_trapping_instance,
    saddle_avoidance_trial,
    trapping_check,
    trapping_sweep,
    trapping_to_csv,
    wilson_interval,
)

from gmml.lemmas import (
    HypothesisViolation,
    LemmaCheckReport,
    check_lemma_center_negative,
    check_lemma_center_positive,
    check_lemma_general_calc,
    check_lemma_wdifference,
    lemma_suite,
)

from gmml.config import ExperimentConfig
