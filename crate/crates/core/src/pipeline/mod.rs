//! Detection/estimation retrieval suites, two-radar fusion, and bias correction.

pub mod bundle;
pub mod cdf;
pub mod features;
pub mod fusion;
pub mod output;
pub mod retrieval;
pub mod train;
pub mod zonal;

pub use bundle::{load_suite, save_suite, IndexMeta};
pub use cdf::{fit_cdf_map, CdfMap, DEFAULT_KNOTS};
pub use features::{
    class_index, class_label, detection_features, detection_matrix, detection_targets, estimation_features,
    estimation_matrix, one_hot, N_CLASSES,
};
pub use fusion::{fuse, FusedLabel, FusedRetrieval};
pub use output::{
    read_retrieval_rows, write_fused_csv, write_retrieval_csv, LocatedFusion, LocatedRetrieval,
    RetrievalRow,
};
pub use retrieval::{
    finalize_rate, rain_estimation_available, retrieve_pixel, retrieve_records, PixelRetrieval,
    RetrievalSuite,
};
pub use train::{train_suite, NetConfig, SuiteConfig, TrainedSuite};
pub use zonal::{apply_zonal_scale, band_means, fit_zonal_scale, ZonalScale, DEFAULT_BAND_WIDTH};
