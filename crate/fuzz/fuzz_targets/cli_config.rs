#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab_cli::commands::{attribute, classify, eval, gen_data, select, train_airrep};
use tda_lab_cli::config::parse_config_bytes;

// The first byte picks the command whose config is parsed.
fuzz_target!(|data: &[u8]| {
    let Some((&which, body)) = data.split_first() else { return };
    match which % 6 {
        0 => drop(parse_config_bytes::<gen_data::GenDataConfig>(body)),
        1 => drop(parse_config_bytes::<attribute::AttributeConfig>(body)),
        2 => drop(parse_config_bytes::<train_airrep::TrainAirRepConfig>(body)),
        3 => drop(parse_config_bytes::<eval::EvalConfig>(body)),
        4 => drop(parse_config_bytes::<select::SelectConfig>(body)),
        _ => drop(parse_config_bytes::<classify::ClassifyConfig>(body)),
    }
});
