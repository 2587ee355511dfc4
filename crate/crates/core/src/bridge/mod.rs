//! Teachers and the embedding-to-logits bridge.

mod fixture;
mod oracle;
mod service;
mod teacher;
mod tokenize;
mod transform;

pub use fixture::{FixtureStore, FixtureTeacher, FIXTURE_MAGIC, FIXTURE_VERSION};
pub use oracle::{NoisyOracleTeacher, ORACLE_MARGIN};
pub use service::{
    decode_f32_payload, encode_f32_payload, ServiceConfig, ServiceTeacher, TeacherRequest, TeacherResponse, Want,
    QUERY_PATH,
};
pub use teacher::{class_set_digest, PreviousModelTeacher, Teacher, TeacherHandle, TeacherKind};
pub use tokenize::{TokenVocab, TokenizedLabelSet, PAUSE, PAUSE_TOKEN};
pub use transform::{label_token_losses, transform_embeddings_to_logits, EmbeddingTensor, DEFAULT_INVERSION_EPS};
