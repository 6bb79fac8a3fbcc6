//! Player names, birth dates and market values from a flat CSV file
//! (`player_id,name,birth_date,market_value`).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerMeta {
    pub player_id: String,
    pub name: String,
    pub birth_date: NaiveDate,
    pub market_value: f64,
}

impl PlayerMeta {
    /// Whole years of age on `date`.
    pub fn age_on(&self, date: NaiveDate) -> u32 {
        let mut age = date.year() - self.birth_date.year();
        if (date.month(), date.day()) < (self.birth_date.month(), self.birth_date.day()) {
            age -= 1;
        }
        age.max(0) as u32
    }
}

/// Source of player metadata used by recruitment filters.
pub trait MetadataProvider {
    fn get(&self, player_id: &str) -> Option<&PlayerMeta>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvMetadata {
    pub players: BTreeMap<String, PlayerMeta>,
}

impl CsvMetadata {
    pub fn from_rows(rows: impl IntoIterator<Item = PlayerMeta>) -> Self {
        CsvMetadata { players: rows.into_iter().map(|p| (p.player_id.clone(), p)).collect() }
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<PlayerMeta>, _>>()?;
        Ok(Self::from_rows(rows))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["player_id", "name", "birth_date", "market_value"])?;
        for p in self.players.values() {
            w.write_record([&p.player_id, &p.name, &p.birth_date.to_string(), &format!("{:.0}", p.market_value)])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl MetadataProvider for CsvMetadata {
    fn get(&self, player_id: &str) -> Option<&PlayerMeta> {
        self.players.get(player_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_and_round_trip() {
        let p = PlayerMeta {
            player_id: "p1".into(),
            name: "Ana Silva".into(),
            birth_date: NaiveDate::from_ymd_opt(2000, 6, 15).unwrap(),
            market_value: 2.5e6,
        };
        assert_eq!(p.age_on(NaiveDate::from_ymd_opt(2025, 6, 14).unwrap()), 24);
        assert_eq!(p.age_on(NaiveDate::from_ymd_opt(2025, 6, 15).unwrap()), 25);
        let meta = CsvMetadata::from_rows([p.clone()]);
        let mut buf = Vec::new();
        meta.write(&mut buf).unwrap();
        let back = CsvMetadata::read(buf.as_slice()).unwrap();
        assert_eq!(back.get("p1"), Some(&p));
    }
}
