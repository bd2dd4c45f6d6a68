use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use sacl::data::{combine_multilingual, load_dataset, load_lexicon, ColumnMap, LexiconSet};
use sacl::Dataset;

/// A `LANG=PATH` argument; a bare path takes its language from the file name.
#[derive(Debug, Clone)]
pub struct LangPath {
    pub language: String,
    pub path: PathBuf,
}

impl FromStr for LangPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some((lang, path)) = s.split_once('=') {
            if lang.is_empty() || path.is_empty() {
                return Err(format!("expected LANG=PATH, got {s:?}"));
            }
            return Ok(LangPath { language: lang.to_string(), path: PathBuf::from(path) });
        }
        let path = PathBuf::from(s);
        let language = language_from_name(&path).ok_or_else(|| format!("cannot infer a language from {s:?}; use LANG=PATH"))?;
        Ok(LangPath { language, path })
    }
}

fn language_from_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let lang = stem.split('_').next()?;
    (!lang.is_empty()).then(|| lang.to_string())
}

pub fn load_datasets(files: &[LangPath]) -> Result<Dataset> {
    let sets = files
        .iter()
        .map(|f| load_dataset(&f.path, &ColumnMap::default(), &f.language).with_context(|| format!("loading {}", f.path.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_multilingual(&sets)?)
}

pub fn load_lexicons(files: &[LangPath]) -> Result<Option<LexiconSet>> {
    if files.is_empty() {
        return Ok(None);
    }
    let mut set = LexiconSet::new();
    for f in files {
        set.insert(load_lexicon(&f.path, &f.language).with_context(|| format!("loading {}", f.path.display()))?);
    }
    Ok(Some(set))
}

pub fn paths(files: &[&[LangPath]]) -> Vec<PathBuf> {
    files.iter().flat_map(|fs| fs.iter().map(|f| f.path.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lang_path_forms() {
        let p: LangPath = "hau=data/train.tsv".parse().unwrap();
        assert_eq!((p.language.as_str(), p.path.as_path()), ("hau", Path::new("data/train.tsv")));
        let p: LangPath = "data/pt-MZ_train.tsv".parse().unwrap();
        assert_eq!(p.language, "pt-MZ");
        assert!("=x.tsv".parse::<LangPath>().is_err());
    }
}
