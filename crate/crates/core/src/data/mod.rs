//! Coincidence records, stratified databases, file formats, splitting, and
//! the synthetic generator.

mod io;
mod record;
mod split;
mod synthetic;

pub use io::{
    csv_header, load_database, load_records, read_binary, read_csv, save_database, save_records,
    write_binary, write_csv, DbFormat, RecordFile, DB_MAGIC, DB_VERSION,
};
pub use record::{
    stratify_by_surface, AncillaryState, CoincidenceRecord, PrecipDatabase, PrecipLabel,
    RadarSource, SurfaceClass, N_ANCILLARY, OCCURRENCE_THRESHOLD, TB_MAX, TB_MIN,
};
pub use split::{split_database, split_indices, SplitIndices, DEFAULT_FRACTIONS};
pub use synthetic::{
    generate_synthetic, gmi_channels, ChannelSpec, GammaParams, LogNormalParams, SyntheticConfig,
    EMISSION_MAX_GHZ, RAIN_ICE_FRACTION, SCATTERING_MIN_GHZ,
};
