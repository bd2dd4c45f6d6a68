//! Dataset and lexicon ingestion, multilingual combination, stratified folds
//! and label-frequency weights.
//!
//! Dataset files are tab-separated with a mandatory header row
//! (`ID<TAB>tweet<TAB>label` by default). Lexicon files are headerless
//! `phrase<TAB>polarity` rows. Both tolerate LF and CRLF line endings.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentiment polarity. The declaration order is the canonical category order
/// used for logits, confusion matrices and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Polarity> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: Polarity,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    examples: Vec<Example>,
    languages: BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids and blank texts.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            if ex.text.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("example `{}` has empty text", ex.id)));
            }
        }
        let languages = examples.iter().map(|e| e.language.clone()).collect();
        Ok(Dataset { examples, languages })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_counts(&self) -> [usize; Polarity::COUNT] {
        let mut counts = [0; Polarity::COUNT];
        for ex in &self.examples {
            counts[ex.label.index()] += 1;
        }
        counts
    }

    /// Returns the sub-dataset made of the given ids, in dataset order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> Dataset {
        let examples: Vec<Example> = self
            .examples
            .iter()
            .filter(|e| ids.contains(&e.id))
            .cloned()
            .collect();
        let languages = examples.iter().map(|e| e.language.clone()).collect();
        Dataset { examples, languages }
    }
}

/// Header names of the dataset columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub text: String,
    pub label: String,
    /// Optional language column; when absent every row gets the language
    /// passed to [`load_dataset`].
    pub language: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "ID".into(),
            text: "tweet".into(),
            label: "label".into(),
            language: None,
        }
    }
}

fn lines_of(contents: &str) -> impl Iterator<Item = &str> {
    contents.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l))
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        message: format!("not valid UTF-8: {e}"),
    })
}

/// Loads a tab-separated dataset file. Row numbers in errors are 1-based
/// line numbers (the header is line 1).
pub fn load_dataset(path: &Path, columns: &ColumnMap, language: &str) -> Result<Dataset> {
    let contents = read_utf8(path)?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut lines = lines_of(&contents).enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) if !h.trim().is_empty() => h.split('\t').collect(),
        _ => return Err(parse_err(1, "missing header row".into())),
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("header has no `{name}` column")))
    };
    let id_col = find(&columns.id)?;
    let text_col = find(&columns.text)?;
    let label_col = find(&columns.label)?;
    let lang_col = columns.language.as_deref().map(find).transpose()?;

    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(parse_err(
                row,
                format!("expected {} columns, found {}", header.len(), fields.len()),
            ));
        }
        let label = fields[label_col].parse::<Polarity>().map_err(|m| parse_err(row, m))?;
        let id = fields[id_col].to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(row, format!("duplicate id `{id}`")));
        }
        let text = fields[text_col].to_string();
        if text.trim().is_empty() {
            return Err(parse_err(row, "empty text".into()));
        }
        let language = lang_col.map_or(language, |c| fields[c]).to_string();
        examples.push(Example { id, text, label, language });
    }
    Dataset::new(examples)
}

/// Writes a dataset with columns `ID`, `tweet`, `label`, `lang`; readable by
/// [`load_dataset`] with `language: Some("lang")`.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::from("ID\ttweet\tlabel\tlang\n");
    for ex in dataset.examples() {
        for field in [&ex.id, &ex.text, &ex.language] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!(
                    "example `{}` contains a tab or line break",
                    ex.id
                )));
            }
        }
        out.push_str(&format!("{}\t{}\t{}\t{}\n", ex.id, ex.text, ex.label, ex.language));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub phrase: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Lexicon {
    pub language: String,
    entries: Vec<LexiconEntry>,
}

impl Lexicon {
    /// Builds a lexicon, keeping the first of any case-insensitive duplicates.
    pub fn new(language: impl Into<String>, entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(entries.len());
        for entry in entries {
            if entry.phrase.trim().is_empty() {
                return Err(Error::InvalidArgument("empty lexicon phrase".into()));
            }
            if entry.polarity == Polarity::Neutral {
                return Err(Error::InvalidArgument(format!(
                    "lexicon phrase `{}` is neutral",
                    entry.phrase
                )));
            }
            if seen.insert(entry.phrase.trim().to_lowercase()) {
                kept.push(entry);
            }
        }
        Ok(Lexicon { language: language.into(), entries: kept })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_lexicon(path: &Path, language: &str) -> Result<Lexicon> {
    let contents = read_utf8(path)?;
    let mut entries = Vec::new();
    for (i, line) in lines_of(&contents).enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.to_path_buf(), row, message };
        let (phrase, polarity) = line
            .rsplit_once('\t')
            .ok_or_else(|| err("expected `phrase<TAB>polarity`".into()))?;
        let polarity = match polarity.parse::<Polarity>() {
            Ok(Polarity::Neutral) => return Err(err("lexicon polarity must be positive or negative".into())),
            Ok(p) => p,
            Err(m) => return Err(err(m)),
        };
        if phrase.trim().is_empty() {
            return Err(err("empty phrase".into()));
        }
        entries.push(LexiconEntry { phrase: phrase.trim().to_string(), polarity });
    }
    Lexicon::new(language, entries)
}

/// Writes `phrase<TAB>polarity` rows readable by [`load_lexicon`].
pub fn write_lexicon(path: &Path, lexicon: &Lexicon) -> Result<()> {
    let mut out = String::new();
    for e in lexicon.entries() {
        if e.phrase.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!("lexicon phrase `{}` contains a tab or line break", e.phrase)));
        }
        out.push_str(&format!("{}\t{}\n", e.phrase, e.polarity));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Concatenates per-language datasets. With more than one input, every id is
/// rewritten to `<lang>:<id>` (ids already carrying their prefix are kept).
pub fn combine_multilingual(datasets: &[Dataset]) -> Result<Dataset> {
    if let [single] = datasets {
        return Ok(single.clone());
    }
    let mut examples = Vec::with_capacity(datasets.iter().map(Dataset::len).sum());
    for ds in datasets {
        for ex in ds.examples() {
            let mut ex = ex.clone();
            let prefix = format!("{}:", ex.language);
            if !ex.id.starts_with(&prefix) {
                ex.id = format!("{prefix}{}", ex.id);
            }
            examples.push(ex);
        }
    }
    Dataset::new(examples)
}

/// Strips a `<lang>:` prefix added by [`combine_multilingual`].
pub fn source_id(example: &Example) -> &str {
    example
        .id
        .strip_prefix(example.language.as_str())
        .and_then(|rest| rest.strip_prefix(':'))
        .unwrap_or(&example.id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
}

/// What the folds are stratified on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratify {
    #[default]
    Label,
    LanguageAndLabel,
}

/// Stratified k-fold split.
///
/// Examples are put in canonical (id-sorted) order, grouped by stratum, each
/// stratum shuffled with one seeded RNG, and the strata dealt round-robin into
/// folds with the dealing position carried from one stratum to the next.
/// Strata are visited label-major, so each label is dealt as one contiguous
/// round-robin run and its per-fold count is within one of `N_c / k` in both
/// modes.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64, stratify: Stratify) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let counts = dataset.label_counts();
    for p in Polarity::ALL {
        let n = counts[p.index()];
        if n > 0 && n < k {
            return Err(Error::CategoryTooSmall { category: p.to_string(), count: n, k });
        }
    }

    let mut canonical: Vec<&Example> = dataset.examples().iter().collect();
    canonical.sort_by(|a, b| a.id.cmp(&b.id));

    let mut strata: BTreeMap<(Polarity, &str), Vec<&str>> = BTreeMap::new();
    for ex in canonical {
        let lang = match stratify {
            Stratify::Label => "",
            Stratify::LanguageAndLabel => ex.language.as_str(),
        };
        strata.entry((ex.label, lang)).or_default().push(ex.id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    let mut cursor = 0;
    for ids in strata.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            val[cursor % k].insert((*id).to_string());
            cursor += 1;
        }
    }

    Ok(val
        .into_iter()
        .enumerate()
        .map(|(fold_index, val_ids)| {
            let train_ids = dataset
                .examples()
                .iter()
                .filter(|e| !val_ids.contains(&e.id))
                .map(|e| e.id.clone())
                .collect();
            FoldSplit { fold_index, train_ids, val_ids }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWeights(pub [f64; Polarity::COUNT]);

impl LabelWeights {
    pub fn uniform() -> Self {
        LabelWeights([1.0; Polarity::COUNT])
    }

    pub fn get(&self, p: Polarity) -> f64 {
        self.0[p.index()]
    }
}

impl Default for LabelWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Inverse-frequency weights `N / (|Y| * N_c)`.
pub fn compute_label_weights(dataset: &Dataset) -> Result<LabelWeights> {
    let counts = dataset.label_counts();
    let total = dataset.len() as f64;
    let mut weights = [0.0; Polarity::COUNT];
    for p in Polarity::ALL {
        let n = counts[p.index()];
        if n == 0 {
            return Err(Error::MissingCategory(p.to_string()));
        }
        weights[p.index()] = total / (Polarity::COUNT as f64 * n as f64);
    }
    Ok(LabelWeights(weights))
}

/// Per-language lexicons.
#[derive(Debug, Clone, Default)]
pub struct LexiconSet(HashMap<String, Lexicon>);

impl LexiconSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lexicon: Lexicon) {
        self.0.insert(lexicon.language.clone(), lexicon);
    }

    pub fn get(&self, language: &str) -> Option<&Lexicon> {
        self.0.get(language)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }
}

/// Writes `id<TAB>label` prediction rows with a header.
pub fn write_predictions(path: &Path, rows: &[(String, Polarity)]) -> Result<()> {
    let mut out = String::from("ID\tlabel\n");
    for (id, label) in rows {
        out.push_str(&format!("{id}\t{label}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn ex(id: &str, label: Polarity, lang: &str) -> Example {
        Example { id: id.into(), text: format!("text {id}"), label, language: lang.into() }
    }

    fn tsv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn synthetic(pos: usize, neg: usize, neu: usize) -> Dataset {
        let mut v = Vec::new();
        for (label, n) in [(Polarity::Positive, pos), (Polarity::Negative, neg), (Polarity::Neutral, neu)] {
            for i in 0..n {
                v.push(ex(&format!("{label}-{i:04}"), label, "hau"));
            }
        }
        Dataset::new(v).unwrap()
    }

    #[test]
    fn loads_fixture_in_file_order() {
        let f = tsv("ID\ttweet\tlabel\nb\tnice one\tpositive\na\tso bad\tnegative\r\nc\tit is\tneutral\n");
        let ds = load_dataset(f.path(), &ColumnMap::default(), "hau").unwrap();
        let ids: Vec<_> = ds.examples().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(ds.examples()[1].label, Polarity::Negative);
        assert_eq!(ds.examples()[1].text, "so bad");
        assert_eq!(ds.languages().iter().collect::<Vec<_>>(), ["hau"]);
    }

    #[test]
    fn unknown_label_names_the_row() {
        let f = tsv("ID\ttweet\tlabel\n1\tok\tpositive\n2\thmm\tmixed\n");
        let err = load_dataset(f.path(), &ColumnMap::default(), "hau").unwrap_err();
        match err {
            Error::Parse { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("mixed"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_and_duplicates_are_errors() {
        let f = tsv("ID\ttweet\tlabel\n1\tok\n");
        assert!(matches!(
            load_dataset(f.path(), &ColumnMap::default(), "x"),
            Err(Error::Parse { row: 2, .. })
        ));
        let f = tsv("ID\ttweet\tlabel\n1\tok\tpositive\n1\tagain\tnegative\n");
        let err = load_dataset(f.path(), &ColumnMap::default(), "x").unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
    }

    #[test]
    fn missing_header_column_is_reported() {
        let f = tsv("id\ttext\tlabel\n1\tok\tpositive\n");
        let err = load_dataset(f.path(), &ColumnMap::default(), "x").unwrap_err();
        assert!(err.to_string().contains("`ID`"), "{err}");
        let columns = ColumnMap { id: "id".into(), text: "text".into(), ..ColumnMap::default() };
        assert_eq!(load_dataset(f.path(), &columns, "x").unwrap().len(), 1);
    }

    #[test]
    fn lexicon_dedup_and_validation() {
        let f = tsv("good\tpositive\nbad\tnegative\n");
        assert_eq!(load_lexicon(f.path(), "hau").unwrap().len(), 2);
        let f = tsv("good\tpositive\ngood\tpositive\nGood\tpositive\n");
        assert_eq!(load_lexicon(f.path(), "hau").unwrap().len(), 1);
        let f = tsv("very good\tpositive\n");
        assert_eq!(load_lexicon(f.path(), "hau").unwrap().entries()[0].phrase, "very good");
        let f = tsv("ok\tneutral\n");
        assert!(matches!(load_lexicon(f.path(), "hau"), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn combine_prefixes_ids_and_unions_languages() {
        let hau = Dataset::new(vec![ex("1", Polarity::Positive, "hau"), ex("2", Polarity::Negative, "hau")]).unwrap();
        let ibo = Dataset::new(vec![
            ex("1", Polarity::Neutral, "ibo"),
            ex("2", Polarity::Positive, "ibo"),
            ex("3", Polarity::Positive, "ibo"),
        ])
        .unwrap();
        let all = combine_multilingual(&[hau.clone(), ibo]).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(all.languages().len(), 2);
        assert_eq!(all.examples()[2].id, "ibo:1");
        assert_eq!(source_id(&all.examples()[2]), "1");
        assert_eq!(combine_multilingual(&[hau.clone()]).unwrap(), hau);
    }

    #[test]
    fn combine_detects_collisions_after_prefixing() {
        let a = Dataset::new(vec![ex("hau:1", Polarity::Positive, "hau")]).unwrap();
        let b = Dataset::new(vec![ex("1", Polarity::Positive, "hau")]).unwrap();
        assert!(matches!(combine_multilingual(&[a, b]), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn combine_twelve_languages() {
        let sets: Vec<Dataset> = (0..12)
            .map(|l| {
                let lang = format!("l{l:02}");
                Dataset::new((0..=l).map(|i| ex(&i.to_string(), Polarity::Positive, &lang)).collect()).unwrap()
            })
            .collect();
        let all = combine_multilingual(&sets).unwrap();
        assert_eq!(all.languages().len(), 12);
        assert_eq!(all.len(), (1..=12).sum::<usize>());
    }

    #[test]
    fn kfold_exact_divisibility() {
        let ds = synthetic(60, 40, 0);
        let folds = stratified_kfold(&ds, 5, 3, Stratify::Label).unwrap();
        assert_eq!(folds.len(), 5);
        for fold in &folds {
            let val = ds.subset(&fold.val_ids).label_counts();
            assert_eq!(val, [12, 8, 0]);
            assert!(fold.train_ids.is_disjoint(&fold.val_ids));
            assert_eq!(fold.train_ids.len() + fold.val_ids.len(), 100);
        }
        assert_eq!(folds, stratified_kfold(&ds, 5, 3, Stratify::Label).unwrap());
    }

    #[test]
    fn kfold_ignores_file_order() {
        let ds = synthetic(30, 20, 10);
        let mut reversed: Vec<Example> = ds.examples().to_vec();
        reversed.reverse();
        let rev = Dataset::new(reversed).unwrap();
        assert_eq!(
            stratified_kfold(&ds, 4, 9, Stratify::Label).unwrap(),
            stratified_kfold(&rev, 4, 9, Stratify::Label).unwrap()
        );
    }

    #[test]
    fn kfold_uneven_counts_by_brute_force_tally() {
        let ds = synthetic(61, 39, 0);
        let folds = stratified_kfold(&ds, 5, 11, Stratify::Label).unwrap();
        // independent tally: walk every example and count membership per fold
        for fold in &folds {
            let (mut pos, mut neg) = (0usize, 0usize);
            for e in ds.examples() {
                if fold.val_ids.contains(&e.id) {
                    match e.label {
                        Polarity::Positive => pos += 1,
                        Polarity::Negative => neg += 1,
                        Polarity::Neutral => unreachable!(),
                    }
                }
            }
            assert!((pos as f64 - 12.2).abs() < 1.0, "pos {pos}");
            assert!((neg as f64 - 7.8).abs() < 1.0, "neg {neg}");
        }
        let covered: usize = folds.iter().map(|f| f.val_ids.len()).sum();
        assert_eq!(covered, 100);
    }

    #[test]
    fn kfold_rejects_small_categories() {
        let ds = synthetic(10, 10, 3);
        match stratified_kfold(&ds, 5, 0, Stratify::Label).unwrap_err() {
            Error::CategoryTooSmall { category, count, .. } => {
                assert_eq!(category, "neutral");
                assert_eq!(count, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(stratified_kfold(&ds, 1, 0, Stratify::Label).is_err());
    }

    #[test]
    fn joint_stratification_keeps_label_balance() {
        let mut v = Vec::new();
        for (i, lang) in ["hau", "ibo", "yor"].iter().enumerate() {
            for j in 0..(17 + i * 5) {
                let label = Polarity::ALL[j % 3];
                v.push(ex(&format!("{lang}{j}"), label, lang));
            }
        }
        let ds = Dataset::new(v).unwrap();
        let folds = stratified_kfold(&ds, 5, 1, Stratify::LanguageAndLabel).unwrap();
        let totals = ds.label_counts();
        for fold in &folds {
            let sub = ds.subset(&fold.val_ids);
            for p in Polarity::ALL {
                let expect = totals[p.index()] as f64 / 5.0;
                assert!((sub.label_counts()[p.index()] as f64 - expect).abs() < 1.0);
            }
        }
    }

    #[test]
    fn label_weights_inverse_frequency() {
        let w = compute_label_weights(&synthetic(50, 30, 20)).unwrap();
        approx::assert_abs_diff_eq!(w.0[0], 100.0 / 150.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(w.0[1], 100.0 / 90.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(w.0[2], 100.0 / 60.0, epsilon = 1e-12);

        let w = compute_label_weights(&synthetic(30, 30, 30)).unwrap();
        assert_eq!(w.0, [1.0, 1.0, 1.0]);

        let w = compute_label_weights(&synthetic(1, 1, 98)).unwrap();
        let oracle = |n: f64| 100.0 / (3.0 * n);
        approx::assert_abs_diff_eq!(w.0[0], oracle(1.0), epsilon = 1e-12);
        approx::assert_abs_diff_eq!(w.0[0], 33.333_333_333_333_336, epsilon = 1e-9);
        approx::assert_abs_diff_eq!(w.0[2], 0.340_136_054_421_768_7, epsilon = 1e-12);

        assert!(matches!(compute_label_weights(&synthetic(3, 3, 0)), Err(Error::MissingCategory(c)) if c == "neutral"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dataset() -> impl Strategy<Value = Dataset> {
            prop::collection::vec(("[a-z ]{0,12}[a-z]", 0usize..3, "[a-z]{2,3}"), 1..40).prop_map(|rows| {
                let examples = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (text, l, lang))| Example {
                        id: format!("id{i}"),
                        text,
                        label: Polarity::ALL[l],
                        language: lang,
                    })
                    .collect();
                Dataset::new(examples).unwrap()
            })
        }

        proptest! {
            #[test]
            fn tsv_round_trip(ds in arb_dataset()) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("ds.tsv");
                write_dataset(&path, &ds).unwrap();
                let columns = ColumnMap { language: Some("lang".into()), ..ColumnMap::default() };
                prop_assert_eq!(load_dataset(&path, &columns, "").unwrap(), ds);
            }

            #[test]
            fn weights_reweigh_to_total(pos in 1usize..200, neg in 1usize..200, neu in 1usize..200) {
                let ds = synthetic(pos, neg, neu);
                let w = compute_label_weights(&ds).unwrap();
                let counts = ds.label_counts();
                let s: f64 = (0..3).map(|c| w.0[c] * counts[c] as f64).sum();
                prop_assert!((s - ds.len() as f64).abs() < 1e-9);
                prop_assert!(w.0.iter().all(|&x| x > 0.0));
            }

            #[test]
            fn folds_partition_and_stratify(pos in 5usize..60, neg in 5usize..60, neu in 5usize..60, k in 2usize..6, seed: u64) {
                let ds = synthetic(pos, neg, neu);
                let folds = stratified_kfold(&ds, k, seed, Stratify::Label).unwrap();
                let totals = ds.label_counts();
                let mut seen = BTreeSet::new();
                for f in &folds {
                    prop_assert!(f.train_ids.is_disjoint(&f.val_ids));
                    prop_assert_eq!(f.train_ids.len() + f.val_ids.len(), ds.len());
                    for id in &f.val_ids { prop_assert!(seen.insert(id.clone())); }
                    let c = ds.subset(&f.val_ids).label_counts();
                    for p in 0..3 {
                        prop_assert!((c[p] as f64 - totals[p] as f64 / k as f64).abs() < 1.0);
                    }
                }
                prop_assert_eq!(seen.len(), ds.len());
            }
        }
    }
}
