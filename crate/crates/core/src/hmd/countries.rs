/// A population in the default study grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Country {
    /// Abbreviation used in reports.
    pub code: &'static str,
    pub name: &'static str,
    /// HMD population code used in file names.
    pub hmd_code: &'static str,
    /// Last year of data used by default.
    pub last_year: i32,
}

/// The nineteen default populations, all starting in 1950.
pub const COUNTRIES: [Country; 19] = [
    Country {
        code: "AUS",
        name: "Australia",
        hmd_code: "AUS",
        last_year: 2014,
    },
    Country {
        code: "BEL",
        name: "Belgium",
        hmd_code: "BEL",
        last_year: 2015,
    },
    Country {
        code: "CAN",
        name: "Canada",
        hmd_code: "CAN",
        last_year: 2011,
    },
    Country {
        code: "DEN",
        name: "Denmark",
        hmd_code: "DNK",
        last_year: 2016,
    },
    Country {
        code: "FIN",
        name: "Finland",
        hmd_code: "FIN",
        last_year: 2015,
    },
    Country {
        code: "FRA",
        name: "France",
        hmd_code: "FRATNP",
        last_year: 2016,
    },
    Country {
        code: "ITA",
        name: "Italy",
        hmd_code: "ITA",
        last_year: 2014,
    },
    Country {
        code: "JPN",
        name: "Japan",
        hmd_code: "JPN",
        last_year: 2016,
    },
    Country {
        code: "NET",
        name: "Netherlands",
        hmd_code: "NLD",
        last_year: 2016,
    },
    Country {
        code: "NZ",
        name: "New Zealand",
        hmd_code: "NZL_NP",
        last_year: 2013,
    },
    Country {
        code: "NOR",
        name: "Norway",
        hmd_code: "NOR",
        last_year: 2014,
    },
    Country {
        code: "PRT",
        name: "Portugal",
        hmd_code: "PRT",
        last_year: 2015,
    },
    Country {
        code: "SPA",
        name: "Spain",
        hmd_code: "ESP",
        last_year: 2016,
    },
    Country {
        code: "SWE",
        name: "Sweden",
        hmd_code: "SWE",
        last_year: 2016,
    },
    Country {
        code: "SWI",
        name: "Switzerland",
        hmd_code: "CHE",
        last_year: 2016,
    },
    Country {
        code: "SCO",
        name: "Scotland",
        hmd_code: "GBR_SCO",
        last_year: 2016,
    },
    Country {
        code: "EW",
        name: "England & Wales",
        hmd_code: "GBRTENW",
        last_year: 2016,
    },
    Country {
        code: "IRE",
        name: "Ireland",
        hmd_code: "IRL",
        last_year: 2014,
    },
    Country {
        code: "USA",
        name: "United States of America",
        hmd_code: "USA",
        last_year: 2016,
    },
];

impl Country {
    pub fn lookup(code: &str) -> Option<&'static Country> {
        let code = code.trim();
        COUNTRIES
            .iter()
            .find(|c| c.code.eq_ignore_ascii_case(code) || c.hmd_code.eq_ignore_ascii_case(code))
    }
}
