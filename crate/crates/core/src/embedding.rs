//! Word vectors: word2vec text I/O, random and synthetic initialisation, and
//! hard debiasing (gender direction, neutralize, equalize).

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::SynthLexicon;
use crate::error::{Error, Result};
use crate::identity::IdentityPairLexicon;
use crate::lexfile;

pub const DEFAULT_DIM: usize = 300;
const RANDOM_INIT_RANGE: f64 = 0.25;
const UNIT_TOLERANCE: f64 = 1e-9;

/// Row-major `|vocab| x dim` matrix of word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(vocab: Vec<String>, dim: usize, data: Vec<f64>) -> Result<EmbeddingMatrix> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} words of dimension {dim}",
                data.len(),
                vocab.len()
            )));
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(EmbeddingMatrix { vocab, index, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    fn require(&self, word: &str) -> Result<usize> {
        self.index_of(word).ok_or_else(|| Error::MissingWord(word.to_string()))
    }

    /// True when every row has unit L2 norm within 1e-9.
    pub fn is_normalized(&self) -> bool {
        (0..self.len()).all(|i| (norm(self.row(i)) - 1.0).abs() <= UNIT_TOLERANCE)
    }

    pub fn normalized(&self) -> Result<EmbeddingMatrix> {
        let mut out = self.clone();
        for i in 0..out.len() {
            let n = norm(out.row(i));
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::NonFinite(format!("norm of embedding row {:?}", out.vocab[i])));
            }
            out.row_mut(i).iter_mut().for_each(|x| *x /= n);
        }
        Ok(out)
    }

    /// Writes word2vec text format with a `count dim` header and 17
    /// significant digits per value.
    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, w) in self.vocab.iter().enumerate() {
            write!(out, "{w}")?;
            for x in self.row(i) {
                write!(out, " {x:.16e}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Entries i.i.d. uniform in [-0.25, 0.25].
pub fn random_init(vocab: &[String], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..vocab.len() * dim)
        .map(|_| rng.random_range(-RANDOM_INIT_RANGE..=RANDOM_INIT_RANGE))
        .collect();
    EmbeddingMatrix::new(vocab.to_vec(), dim, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEmbeddings {
    pub matrix: EmbeddingMatrix,
    /// Fraction of vocabulary words found in the file.
    pub coverage: f64,
}

/// Loads word2vec text vectors for `vocab`; words missing from the file get
/// the row [`random_init`] would give them under `seed`.
pub fn load_text_embeddings(
    path: impl AsRef<Path>,
    vocab: &[String],
    dim: usize,
    seed: u64,
) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut matrix = random_init(vocab, dim, seed)?;
    let mut found = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let lineno = i + 1;
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if lineno == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(header_dim)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if header_dim != dim {
                    return Err(Error::parse(path, lineno, format!("header dimension {header_dim}, expected {dim}")));
                }
                continue;
            }
        }
        if rest.len() != dim {
            return Err(Error::parse(path, lineno, format!("expected {dim} values, found {}", rest.len())));
        }
        let Some(row) = matrix.index_of(word) else { continue };
        let target = matrix.row_mut(row);
        for (slot, field) in target.iter_mut().zip(&rest) {
            *slot = field
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("unparseable value {field:?}")))?;
        }
        found[row] = true;
    }
    let coverage = if vocab.is_empty() {
        1.0
    } else {
        found.iter().filter(|f| **f).count() as f64 / vocab.len() as f64
    };
    Ok(LoadedEmbeddings { matrix, coverage })
}

/// Loads every vector in a word2vec text file. The dimension comes from the
/// header when present, otherwise from the first row.
pub fn read_text_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut dim: Option<usize> = None;
    let mut vocab = Vec::new();
    let mut data = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.trim_end_matches('\r').split(' ').filter(|f| !f.is_empty());
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if lineno == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        let d = *dim.get_or_insert(rest.len());
        if rest.len() != d || d == 0 {
            return Err(Error::parse(path, lineno, format!("expected {d} values, found {}", rest.len())));
        }
        for field in rest {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("unparseable value {field:?}")))?,
            );
        }
        vocab.push(word.to_string());
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 1, "no vectors in file"))?;
    EmbeddingMatrix::new(vocab, dim, data)
}

/// Structured stand-in for pretrained vectors.
///
/// Vectors are Gaussian noise plus shared semantic components: a gender
/// axis (male +, female -), an offensiveness axis, a pleasantness axis and
/// a topic axis. Gendered pairs share most of their noise, and offensive
/// and topic words lean slightly female, the way stereotypes leak into
/// vectors trained on web text.
pub fn synthetic_embeddings(
    vocab: &[String],
    dim: usize,
    seed: u64,
    lexicon: &SynthLexicon,
    pronouns: &IdentityPairLexicon,
) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    const SCALE: f64 = 2.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid normal");
    let axis = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    };
    let gender = axis(&mut rng);
    let offensive = axis(&mut rng);
    let pleasant = axis(&mut rng);
    let topic = axis(&mut rng);
    let person = axis(&mut rng);

    let mut pair_noise: HashMap<String, Vec<f64>> = HashMap::new();
    let gendered: Vec<(String, String)> = lexicon
        .identity_pairs
        .iter()
        .chain(pronouns.pairs.iter())
        .cloned()
        .collect();
    for (m, f) in &gendered {
        if pair_noise.contains_key(m) || pair_noise.contains_key(f) {
            continue;
        }
        let shared: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        for w in [m, f] {
            let own: Vec<f64> = shared.iter().map(|s| 0.8 * s + 0.6 * normal.sample(&mut rng)).collect();
            pair_noise.insert(w.clone(), own);
        }
    }
    let in_list = |list: &[String], w: &str| list.iter().any(|x| x == w);

    let mut data = Vec::with_capacity(vocab.len() * dim);
    for word in vocab {
        let mut v: Vec<f64> = match pair_noise.get(word) {
            Some(n) => n.clone(),
            None => (0..dim).map(|_| normal.sample(&mut rng)).collect(),
        };
        let mut add = |dir: &[f64], weight: f64| {
            v.iter_mut().zip(dir).for_each(|(x, d)| *x += weight * d);
        };
        let group = lexicon.group_of(word).or_else(|| pronouns.group_of(word));
        match group {
            Some(crate::corpus::Group::Male) => {
                add(&gender, 0.6);
                add(&person, 0.5);
            }
            Some(crate::corpus::Group::Female) => {
                add(&gender, -0.6);
                add(&person, 0.5);
            }
            _ => {}
        }
        if in_list(&lexicon.offensive_adjectives, word) || in_list(&lexicon.offensive_verbs, word) {
            add(&offensive, 0.8);
            add(&gender, -0.25);
        }
        if in_list(&lexicon.non_offensive_adjectives, word) || in_list(&lexicon.non_offensive_verbs, word) {
            add(&pleasant, 0.8);
        }
        if in_list(&lexicon.topic_words, word) {
            add(&topic, 0.6);
            add(&gender, -0.4);
        }
        data.extend(v.into_iter().map(|x| x * SCALE));
    }
    EmbeddingMatrix::new(vocab.to_vec(), dim, data)
}

/// Unit vector spanning the gender subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderDirection(Vec<f64>);

impl GenderDirection {
    pub fn new(v: Vec<f64>) -> Result<GenderDirection> {
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NonFinite("gender direction".into()));
        }
        Ok(GenderDirection(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebiasLexicon {
    pub definitional_pairs: Vec<(String, String)>,
    pub equalize_pairs: Vec<(String, String)>,
    pub gendered_words: BTreeSet<String>,
}

impl Default for DebiasLexicon {
    fn default() -> Self {
        let pairs: Vec<(String, String)> = [
            ("he", "she"),
            ("man", "woman"),
            ("boy", "girl"),
            ("father", "mother"),
            ("son", "daughter"),
            ("male", "female"),
            ("his", "her"),
            ("himself", "herself"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        // Every word the swap lexicon treats as gendered is exempt as well.
        let swap = IdentityPairLexicon::default_swap();
        let extra = swap
            .pairs
            .iter()
            .flat_map(|(m, f)| [m.clone(), f.clone()])
            .chain(swap.one_way.iter().map(|(a, _)| a.clone()));
        DebiasLexicon::new(pairs.clone(), pairs, extra).expect("valid built-in lexicon")
    }
}

impl DebiasLexicon {
    /// `gendered_words` is extended with every word of both pair lists.
    pub fn new(
        definitional_pairs: Vec<(String, String)>,
        equalize_pairs: Vec<(String, String)>,
        extra_gendered: impl IntoIterator<Item = String>,
    ) -> Result<DebiasLexicon> {
        if definitional_pairs.is_empty() {
            return Err(Error::Config("debias lexicon needs at least one definitional pair".into()));
        }
        if let Some((a, _)) = definitional_pairs.iter().chain(&equalize_pairs).find(|(a, b)| a == b) {
            return Err(Error::Config(format!("{a:?} appears on both sides of a pair")));
        }
        let mut gendered: BTreeSet<String> = extra_gendered.into_iter().collect();
        for (a, b) in definitional_pairs.iter().chain(&equalize_pairs) {
            gendered.insert(a.clone());
            gendered.insert(b.clone());
        }
        Ok(DebiasLexicon {
            definitional_pairs,
            equalize_pairs,
            gendered_words: gendered,
        })
    }

    /// Sections `[definitional]` and `[equalize]` hold `male<TAB>female`
    /// pairs; `[gendered]` holds one exempt word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<DebiasLexicon> {
        let path = path.as_ref();
        let (mut def, mut eq, mut gendered) = (Vec::new(), Vec::new(), Vec::new());
        for e in lexfile::read(path)? {
            match e.section.as_str() {
                "definitional" | "equalize" => {
                    lexfile::expect_fields(&e, 2, path)?;
                    let pair = (e.fields[0].clone(), e.fields[1].clone());
                    if e.section == "definitional" {
                        def.push(pair);
                    } else {
                        eq.push(pair);
                    }
                }
                "gendered" => {
                    lexfile::expect_fields(&e, 1, path)?;
                    gendered.push(e.fields[0].clone());
                }
                other => return Err(Error::parse(path, e.line, format!("unknown section [{other}]"))),
            }
        }
        DebiasLexicon::new(def, eq, gendered)
    }
}

fn require_normalized(emb: &EmbeddingMatrix) -> Result<()> {
    if emb.is_normalized() {
        Ok(())
    } else {
        Err(Error::Config("embedding rows must be unit-normalized".into()))
    }
}

/// Top principal component of the pair-centred definitional vectors, signed
/// so that the male side projects positively.
pub fn gender_direction(emb: &EmbeddingMatrix, pairs: &[(String, String)]) -> Result<GenderDirection> {
    require_normalized(emb)?;
    if pairs.is_empty() {
        return Err(Error::Config("no definitional pairs".into()));
    }
    let dim = emb.dim();
    let mut centred: Vec<Vec<f64>> = Vec::with_capacity(2 * pairs.len());
    for (m, f) in pairs {
        let (a, b) = (emb.row(emb.require(m)?), emb.row(emb.require(f)?));
        let half: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x - y)).collect();
        centred.push(half.iter().map(|x| -x).collect());
        centred.push(half);
    }

    // Power iteration on C = sum v v^T, never forming C explicitly.
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; dim];
        for v in &centred {
            let c = dot(v, x);
            y.iter_mut().zip(v).for_each(|(yi, vi)| *yi += c * vi);
        }
        y
    };
    let mut x = centred[1].clone();
    if norm(&x) == 0.0 {
        x = vec![1.0; dim];
    }
    let n = norm(&x);
    x.iter_mut().for_each(|v| *v /= n);
    for _ in 0..100_000 {
        let mut y = apply(&x);
        let n = norm(&y);
        if n == 0.0 {
            return Err(Error::Config("definitional pairs span no direction".into()));
        }
        y.iter_mut().for_each(|v| *v /= n);
        // Fix the sign before comparing so oscillation cannot stall convergence.
        if dot(&y, &x) < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        let delta = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        x = y;
        if delta < 1e-10 {
            break;
        }
    }

    let (sm, sf) = match (emb.index_of("he"), emb.index_of("she")) {
        (Some(h), Some(s)) => (h, s),
        _ => (emb.require(&pairs[0].0)?, emb.require(&pairs[0].1)?),
    };
    let diff: Vec<f64> = emb.row(sm).iter().zip(emb.row(sf)).map(|(a, b)| a - b).collect();
    if dot(&diff, &x) < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    GenderDirection::new(x)
}

/// Projects `g` out of each listed word and renormalises it.
pub fn neutralize(emb: &EmbeddingMatrix, g: &GenderDirection, words: &[String]) -> Result<EmbeddingMatrix> {
    require_normalized(emb)?;
    let g = g.as_slice();
    let mut out = emb.clone();
    for w in words {
        let i = out.require(w)?;
        let row = out.row_mut(i);
        let p = dot(row, g);
        row.iter_mut().zip(g).for_each(|(x, gi)| *x -= p * gi);
        let n = norm(row);
        if n < 1e-12 {
            return Err(Error::DegenerateNeutralize(w.clone()));
        }
        row.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Moves each pair to be symmetric about the gender-neutral subspace:
/// `a = nu + s g`, `b = nu - s g` with `nu` the neutral part of the pair
/// midpoint and `s = sqrt(1 - |nu|^2)`.
pub fn equalize(emb: &EmbeddingMatrix, g: &GenderDirection, pairs: &[(String, String)]) -> Result<EmbeddingMatrix> {
    require_normalized(emb)?;
    let g = g.as_slice();
    let mut out = emb.clone();
    for (a, b) in pairs {
        let (ia, ib) = (out.require(a)?, out.require(b)?);
        let mu: Vec<f64> = out.row(ia).iter().zip(out.row(ib)).map(|(x, y)| 0.5 * (x + y)).collect();
        let p = dot(&mu, g);
        let nu: Vec<f64> = mu.iter().zip(g).map(|(m, gi)| m - p * gi).collect();
        let nn = dot(&nu, &nu);
        if nn > 1.0 {
            return Err(Error::DegenerateEqualize(a.clone(), b.clone()));
        }
        let s = (1.0 - nn).sqrt();
        for (idx, sign) in [(ia, 1.0), (ib, -1.0)] {
            out.row_mut(idx)
                .iter_mut()
                .zip(nu.iter().zip(g))
                .for_each(|(x, (n, gi))| *x = n + sign * s * gi);
        }
    }
    Ok(out)
}

/// Normalise, find the gender direction, neutralise every non-gendered word
/// and equalise the equalize pairs. Pairs with a word missing from the
/// matrix are skipped.
pub fn hard_debias(emb: &EmbeddingMatrix, lexicon: &DebiasLexicon) -> Result<EmbeddingMatrix> {
    let emb = emb.normalized()?;
    let present = |pairs: &[(String, String)]| -> Vec<(String, String)> {
        pairs
            .iter()
            .filter(|(a, b)| emb.index_of(a).is_some() && emb.index_of(b).is_some())
            .cloned()
            .collect()
    };
    let definitional = present(&lexicon.definitional_pairs);
    if definitional.is_empty() {
        return Err(Error::Config("none of the definitional pairs is in the vocabulary".into()));
    }
    let g = gender_direction(&emb, &definitional)?;
    let neutral: Vec<String> = emb
        .vocab()
        .iter()
        .filter(|w| !lexicon.gendered_words.contains(*w))
        .cloned()
        .collect();
    let emb = neutralize(&emb, &g, &neutral)?;
    equalize(&emb, &g, &present(&lexicon.equalize_pairs))
}

/// Gender direction [`hard_debias`] uses for `emb`.
pub fn debias_direction(emb: &EmbeddingMatrix, lexicon: &DebiasLexicon) -> Result<GenderDirection> {
    let emb = emb.normalized()?;
    let definitional: Vec<(String, String)> = lexicon
        .definitional_pairs
        .iter()
        .filter(|(a, b)| emb.index_of(a).is_some() && emb.index_of(b).is_some())
        .cloned()
        .collect();
    gender_direction(&emb, &definitional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn words(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn toy(rows: &[(&str, [f64; 2])]) -> EmbeddingMatrix {
        let vocab = rows.iter().map(|(w, _)| w.to_string()).collect();
        let data = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        EmbeddingMatrix::new(vocab, 2, data).unwrap()
    }

    fn pair(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn random_init_range_and_determinism() {
        let vocab = words(&["a", "b", "c"]);
        let a = random_init(&vocab, 300, 5).unwrap();
        assert_eq!(a, random_init(&vocab, 300, 5).unwrap());
        assert!(a.data().iter().all(|x| x.abs() <= 0.25));
        assert_ne!(a, random_init(&vocab, 300, 6).unwrap());
    }

    #[test]
    fn direction_of_toy_pair() {
        let emb = toy(&[("he", [1.0, 0.0]), ("she", [-1.0, 0.0])]);
        let g = gender_direction(&emb, &[pair("he", "she")]).unwrap();
        assert_abs_diff_eq!(g.as_slice()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.as_slice()[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_pair_direction_is_the_difference() {
        let s = 0.5f64.sqrt();
        let emb = toy(&[("a", [0.6, 0.8]), ("b", [s, -s])]);
        let g = gender_direction(&emb, &[pair("a", "b")]).unwrap();
        let d = [0.6 - s, 0.8 + s];
        let n = norm(&d);
        assert_abs_diff_eq!(g.as_slice()[0], d[0] / n, epsilon = 1e-9);
        assert_abs_diff_eq!(g.as_slice()[1], d[1] / n, epsilon = 1e-9);
    }

    #[test]
    fn direction_requires_words() {
        let emb = toy(&[("he", [1.0, 0.0])]);
        assert!(matches!(gender_direction(&emb, &[pair("he", "she")]), Err(Error::MissingWord(w)) if w == "she"));
    }

    #[test]
    fn neutralize_toy() {
        let emb = toy(&[("doctor", [0.6, 0.8]), ("x", [0.0, 1.0])]);
        let g = GenderDirection::new(vec![1.0, 0.0]).unwrap();
        let out = neutralize(&emb, &g, &words(&["doctor", "x"])).unwrap();
        assert_eq!(out.vector("doctor").unwrap(), &[0.0, 1.0]);
        assert_eq!(out.vector("x").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn neutralize_parallel_word_fails() {
        let emb = toy(&[("he", [1.0, 0.0])]);
        let g = GenderDirection::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(neutralize(&emb, &g, &words(&["he"])), Err(Error::DegenerateNeutralize(_))));
    }

    #[test]
    fn equalize_toy() {
        let g = GenderDirection::new(vec![1.0, 0.0]).unwrap();
        let sym = toy(&[("a", [0.8, 0.6]), ("b", [-0.8, 0.6])]);
        let out = equalize(&sym, &g, &[pair("a", "b")]).unwrap();
        assert_abs_diff_eq!(out.data(), sym.data(), epsilon = 1e-15);

        let emb = toy(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0])]);
        let out = equalize(&emb, &g, &[pair("a", "b")]).unwrap();
        let r = 0.75f64.sqrt();
        assert_abs_diff_eq!(out.vector("a").unwrap(), &[r, 0.5][..], epsilon = 1e-15);
        assert_abs_diff_eq!(out.vector("b").unwrap(), &[-r, 0.5][..], epsilon = 1e-15);
    }

    #[test]
    fn requires_normalized_input() {
        let emb = toy(&[("a", [2.0, 0.0]), ("b", [0.0, 1.0])]);
        let g = GenderDirection::new(vec![1.0, 0.0]).unwrap();
        assert!(neutralize(&emb, &g, &words(&["b"])).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        let vocab = words(&["x", "y", "z"]);
        let emb = random_init(&vocab, 7, 11).unwrap();
        emb.save_text(&path).unwrap();
        let loaded = load_text_embeddings(&path, &vocab, 7, 0).unwrap();
        assert_eq!(loaded.coverage, 1.0);
        assert_eq!(loaded.matrix, emb);
    }

    #[test]
    fn loader_fallback_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "2 3\na 1 2 3\nb 4 5 6\n").unwrap();
        let vocab = words(&["a", "b", "c"]);
        let loaded = load_text_embeddings(&path, &vocab, 3, 9).unwrap();
        assert!((loaded.coverage - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(loaded.matrix.vector("b").unwrap(), &[4.0, 5.0, 6.0]);
        let fallback = random_init(&vocab, 3, 9).unwrap();
        assert_eq!(loaded.matrix.vector("c"), fallback.vector("c"));

        fs::write(&path, "2 3\na 1 2 3\nb 4 5\n").unwrap();
        assert!(matches!(load_text_embeddings(&path, &vocab, 3, 0), Err(Error::Parse { line: 3, .. })));
        fs::write(&path, "1 4\na 1 2 3 4\n").unwrap();
        assert!(matches!(load_text_embeddings(&path, &vocab, 3, 0), Err(Error::Parse { line: 1, .. })));
        fs::write(&path, "a 1 x 3\n").unwrap();
        assert!(matches!(load_text_embeddings(&path, &vocab, 3, 0), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn whole_file_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "a 1 2\nb 3 4\n").unwrap();
        let m = read_text_embeddings(&path).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.vector("b").unwrap(), &[3.0, 4.0]);
        fs::write(&path, "2 2\na 1 2\nb 3\n").unwrap();
        assert!(matches!(read_text_embeddings(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn headerless_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "a 1 2\nb 3 4\n").unwrap();
        let loaded = load_text_embeddings(&path, &words(&["a", "b"]), 2, 0).unwrap();
        assert_eq!(loaded.coverage, 1.0);
    }

    #[test]
    fn gendered_words_keep_their_direction() {
        let vocab = words(&["he", "she", "king", "queen", "table"]);
        let lex = DebiasLexicon::new(vec![pair("he", "she")], vec![pair("he", "she")], words(&["king", "queen"])).unwrap();
        let emb = random_init(&vocab, 16, 3).unwrap();
        let out = hard_debias(&emb, &lex).unwrap();
        let normed = emb.normalized().unwrap();
        assert_eq!(out.vector("king"), normed.vector("king"));
        let g = debias_direction(&emb, &lex).unwrap();
        assert!(dot(out.vector("table").unwrap(), g.as_slice()).abs() < 1e-12);
    }

    #[test]
    fn lexicon_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        fs::write(&p, "[definitional]\nhe\tshe\n[equalize]\nking\tqueen\n[gendered]\nbeard\n").unwrap();
        let lex = DebiasLexicon::load(&p).unwrap();
        assert_eq!(lex.definitional_pairs, vec![pair("he", "she")]);
        assert!(lex.gendered_words.contains("beard") && lex.gendered_words.contains("queen"));
        fs::write(&p, "[equalize]\nking\tqueen\n").unwrap();
        assert!(DebiasLexicon::load(&p).is_err());
    }
}
