use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::preset::PRESET_VOCAB;
use super::TokenizerError;

pub type TokenId = u32;

pub const TL_START: &str = "TL_START";
pub const TL_END: &str = "TL_END";
pub const PAD: &str = "PAD";
pub const TRUNC: &str = "TRUNC";
pub const NONE: &str = "None";
pub const NAN: &str = "nan";

pub const DECILES: [&str; 10] = ["Q0", "Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7", "Q8", "Q9"];
pub const SPECIALS: [&str; 6] = [TL_START, TL_END, PAD, TRUNC, NONE, NAN];

/// Ids of the tokens every vocabulary must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub tl_start: TokenId,
    pub tl_end: TokenId,
    pub pad: TokenId,
    pub trunc: TokenId,
    pub none: TokenId,
    pub nan: TokenId,
    pub deciles: [TokenId; 10],
}

/// Bijection between token strings and contiguous ids starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialIds,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(TokenizerError::DuplicateToken(t.clone()));
            }
        }
        let need = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| TokenizerError::MissingSpecial(s.to_string()))
        };
        let mut deciles = [0; 10];
        for (k, q) in DECILES.iter().enumerate() {
            deciles[k] = need(q)?;
        }
        let special = SpecialIds {
            tl_start: need(TL_START)?,
            tl_end: need(TL_END)?,
            pad: need(PAD)?,
            trunc: need(TRUNC)?,
            none: need(NONE)?,
            nan: need(NAN)?,
            deciles,
        };
        Ok(Self {
            tokens,
            index,
            special,
        })
    }

    /// The 208-token reference vocabulary.
    pub fn preset() -> Self {
        Self::from_tokens(PRESET_VOCAB).expect("preset vocabulary is well formed")
    }

    /// Deciles and specials only; fitted vocabularies grow from here.
    pub fn base() -> Self {
        Self::from_tokens(DECILES.iter().chain(SPECIALS.iter()).copied())
            .expect("base vocabulary is well formed")
    }

    /// Append a token if absent, returning its id.
    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(id) = self.index.get(token) {
            return *id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn special(&self) -> &SpecialIds {
        &self.special
    }

    pub fn decile(&self, k: usize) -> TokenId {
        self.special.deciles[k]
    }

    /// Decile index of a token id, if it is one of Q0..Q9.
    pub fn decile_of(&self, id: TokenId) -> Option<usize> {
        self.special.deciles.iter().position(|d| *d == id)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>, TokenizerError> {
        ids.iter()
            .map(|id| {
                self.token(*id)
                    .map(str::to_string)
                    .ok_or(TokenizerError::UnknownId(*id))
            })
            .collect()
    }

    /// One token per line; the line number minus one is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        Self::from_tokens(text.lines().filter(|l| !l.is_empty()))
    }

    pub fn write(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_text()).map_err(|e| TokenizerError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|e| TokenizerError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Coarse token type: `Q` for deciles, `special` for the six specials,
    /// otherwise the prefix before the first underscore (`LAB`, `MED`, ...).
    pub fn token_type(token: &str) -> &str {
        if DECILES.contains(&token) {
            "Q"
        } else if SPECIALS.contains(&token) {
            "special"
        } else {
            token.split('_').next().unwrap_or(token)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_has_208_distinct_tokens() {
        let v = Vocabulary::preset();
        assert_eq!(v.len(), 208);
        assert_eq!(v.id("Q0"), Some(0));
        assert_eq!(v.id("TL_START"), Some(10));
        assert_eq!(v.token(207), Some("POSN_prone"));
        assert!(v.id("MED_sodium bicarbonate").is_some());
        assert!(v.id("ADMN_ew_emer.").is_some());
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::preset();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn decode_rejects_unknown_ids() {
        let v = Vocabulary::preset();
        assert!(v.decode(&[]).unwrap().is_empty());
        assert!(matches!(v.decode(&[208]), Err(TokenizerError::UnknownId(208))));
    }

    #[test]
    fn duplicates_and_missing_specials_rejected() {
        assert!(Vocabulary::from_tokens(["Q0", "Q0"]).is_err());
        assert!(matches!(
            Vocabulary::from_tokens(["Q0"]),
            Err(TokenizerError::MissingSpecial(_))
        ));
    }

    #[test]
    fn token_types() {
        assert_eq!(Vocabulary::token_type("Q3"), "Q");
        assert_eq!(Vocabulary::token_type("nan"), "special");
        assert_eq!(Vocabulary::token_type("LAB_hemoglobin"), "LAB");
        assert_eq!(Vocabulary::token_type("RESP_mode_simv"), "RESP");
    }
}
