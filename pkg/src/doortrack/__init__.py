"""doortrack: zone- and heading-adaptive anchor-pair selection for TDOA
indoor positioning, calibrated from doorway transitions.

The toolkit simulates walking sessions with NLOS wall and body-shadow
delays, detects doorways on occupancy grids, calibrates the most favorable
anchor-pair set per zone and travel direction, and tracks with an EKF that
swaps pair sets in a feedback loop.
"""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    DoortrackError,
    FilterDivergenceError,
    InitializationError,
    InvalidInputError,
    MapGenerationError,
    ScenarioFormatError,
    SingularityError,
    ZeroEvidenceError,
)
from .world import (
    Anchor,
    Door,
    Point,
    Scenario,
    Wall,
    Zone,
    count_wall_crossings,
    decompose_against_door,
    door_reference_points,
    load_scenario,
    write_scenario,
    zone_of,
)
from .simkit import (
    BodyShadowModel,
    Pose,
    SimConfig,
    ToaFrame,
    read_toa_csv,
    shadow_delay,
    simulate_session,
    simulate_toa,
    waypoint_trajectory,
    write_toa_csv,
)
from .tracking import (
    AnchorPair,
    EkfConfig,
    Fix,
    TdoaMeasurement,
    TrackerState,
    all_pairs,
    form_tdoas,
    initialize,
    make_pair,
    predict,
    run_fixed_pairs,
    tdoa_jacobian,
    update,
)
from .calibration import (
    CostReport,
    DirectionKey,
    Heading,
    PairTable,
    TransitionWindow,
    extract_transitions,
    parse_pair_table,
    select_pairs,
    select_single_set,
    transition_cost,
    write_pair_table,
)
from .runtime import LabeledFix, RuntimeState, classify_heading, step, track_session
from .doorfind import (
    DoorDetection,
    OccupancyGrid,
    detect_doors,
    generate_map,
    match_detections,
    read_grid,
    write_grid,
)
from .evalkit import ErrorSummary, compare, ecdf, summarize, trajectory_error
