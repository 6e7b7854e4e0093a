//! Operator remap of P machine clusters onto C semantic classes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    /// Higher means more complex; unique within a mapping.
    pub complexity_rank: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub map: Vec<usize>,
    pub classes: Vec<ClassInfo>,
}

impl LabelMapping {
    /// Every cluster is its own class, ranked by index.
    pub fn identity(p: usize) -> Self {
        Self {
            p,
            c: p,
            map: (0..p).collect(),
            classes: (0..p).map(|k| ClassInfo { name: format!("cluster_{k}"), complexity_rank: k as i64 }).collect(),
        }
    }

    pub fn class_of(&self, cluster: usize) -> usize {
        self.map[cluster]
    }

    pub fn rank(&self, class: usize) -> i64 {
        self.classes[class].complexity_rank
    }
}

/// Checks C ≤ P, shape, entry range, unique ranks and surjectivity, in that order.
pub fn validate_mapping(m: &LabelMapping) -> Result<(), ClusterError> {
    if m.c > m.p {
        return Err(ClusterError::TooManyClasses { p: m.p, c: m.c });
    }
    if m.map.len() != m.p || m.classes.len() != m.c {
        return Err(ClusterError::MalformedMapping(format!(
            "map has {} entries and {} classes for P = {}, C = {}",
            m.map.len(),
            m.classes.len(),
            m.p,
            m.c
        )));
    }
    if let Some((index, &value)) = m.map.iter().enumerate().find(|(_, &v)| v >= m.c) {
        return Err(ClusterError::EntryOutOfRange { index, value, classes: m.c });
    }
    let mut ranks = BTreeSet::new();
    for class in &m.classes {
        if !ranks.insert(class.complexity_rank) {
            return Err(ClusterError::DuplicateRank(class.complexity_rank));
        }
    }
    let hit: BTreeSet<usize> = m.map.iter().copied().collect();
    if let Some(class) = (0..m.c).find(|k| !hit.contains(k)) {
        return Err(ClusterError::NotSurjective { class });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping(p: usize, c: usize, map: &[usize]) -> LabelMapping {
        LabelMapping {
            p,
            c,
            map: map.to_vec(),
            classes: (0..c).map(|k| ClassInfo { name: format!("c{k}"), complexity_rank: k as i64 }).collect(),
        }
    }

    #[test]
    fn examples() {
        assert!(validate_mapping(&mapping(6, 2, &[0, 0, 1, 1, 0, 1])).is_ok());
        assert!(matches!(
            validate_mapping(&mapping(6, 2, &[0, 0, 0, 0, 0, 0])),
            Err(ClusterError::NotSurjective { class: 1 })
        ));
        assert!(matches!(
            validate_mapping(&mapping(2, 3, &[0, 1])),
            Err(ClusterError::TooManyClasses { p: 2, c: 3 })
        ));
    }

    #[test]
    fn range_and_rank_errors() {
        assert!(matches!(
            validate_mapping(&mapping(3, 2, &[0, 2, 1])),
            Err(ClusterError::EntryOutOfRange { index: 1, value: 2, classes: 2 })
        ));
        let mut m = mapping(3, 2, &[0, 1, 1]);
        m.classes[1].complexity_rank = 0;
        assert!(matches!(validate_mapping(&m), Err(ClusterError::DuplicateRank(0))));
        assert!(matches!(validate_mapping(&mapping(3, 2, &[0, 1])), Err(ClusterError::MalformedMapping(_))));
    }

    #[test]
    fn identity_is_valid() {
        validate_mapping(&LabelMapping::identity(5)).unwrap();
    }

    #[test]
    fn json_field_names() {
        let json = serde_json::to_string(&mapping(2, 1, &[0, 0])).unwrap();
        assert_eq!(json, r#"{"P":2,"C":1,"map":[0,0],"classes":[{"name":"c0","complexity_rank":0}]}"#);
    }
}
