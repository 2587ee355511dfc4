use crate::bridge::TokenVocab;
use crate::taskstream::Sample;

/// Order-free question encoding: L2-normalized token counts over the
/// vocabulary plus one shared slot for unknown characters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEncoder {
    vocab: TokenVocab,
    feature_len: usize,
}

impl QuestionEncoder {
    pub fn new(vocab: TokenVocab, feature_len: usize) -> Self {
        Self { vocab, feature_len }
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    /// Question encoding length Q.
    pub fn question_dim(&self) -> usize {
        self.vocab.len() + 1
    }

    /// Student input length F + Q.
    pub fn input_dim(&self) -> usize {
        self.feature_len + self.question_dim()
    }

    pub fn encode_question(&self, question: &str) -> Vec<f64> {
        let unknown = self.vocab.len();
        let mut v = vec![0.0; self.question_dim()];
        for t in self.vocab.encode_text_lossy(question) {
            v[t.map_or(unknown, |id| id as usize)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Image features followed by the question encoding.
    pub fn input_vector(&self, sample: &Sample) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(&sample.features);
        x.extend(self.encode_question(&sample.question));
        x
    }
}
