//! Grid models on flat tori: tubular neighbourhoods of embedded circles,
//! gluing of closed forms and metrics, and certification of the result.

pub mod curve;
pub mod cutoff;
pub mod forms;
pub mod grid;
pub mod metric;
pub mod model;
pub mod tubular;
pub mod verify;

pub use curve::{SubmanifoldCurve, DEFAULT_SAMPLES};
pub use cutoff::{CutoffKind, CutoffProfile};
pub use grid::{CovectorField, MetricField, Point, ScalarField, TorusGrid};
pub use tubular::{build_tubular, TubeOptions, TubularData};
pub use forms::{glue_form, primitive_on_tube, reference_form, ClosedForm, GlueOptions, GluedForm, VanishNear};
pub use metric::{glue_metric, minimal_alpha, MetricOptions, MetricPiece};
pub use verify::{verify_pair, CertificationReport, Thresholds};
pub use model::{forge_multiclass, forge_single, load_pair, scale_far_field, ForgeConfig, LoadedPair, ForgeReport, ModelKind, MultiForge, MultiReport, SingleForge};
